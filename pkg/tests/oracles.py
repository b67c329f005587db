"""Independent oracle computations used to derive and check expected values.

Everything here is deliberately written by a different route than the
library code it checks: brute-force scans instead of indexes, direct
Bernoulli simulation instead of closed-form laws, enumeration instead of
log-space arithmetic. Tests freeze values produced by these oracles or
compare library output against them at stated tolerances.
"""

import numpy as np


def mc_success_rate(inputs, trials=100_000, seed=0):
    """Monte Carlo success-rate oracle.

    Draws every voting-cell count per trial: outliers spread multinomially
    over all cells (CSR), inlier counts drawn binomially and added to the
    leading cells. A trial succeeds when some inlier cell strictly exceeds
    every other cell's count and holds at least two inliers — the same peak
    tie rule the model uses.
    """
    rng = np.random.default_rng(seed)
    cells = max(1, round(inputs.expected_cells))
    outliers = round(inputs.expected_outliers)
    fq = round(inputs.expected_query_features)
    n_in = len(inputs.inlier_cells)
    if n_in == 0:
        return 0.0

    out_counts = rng.multinomial(outliers, np.full(cells, 1.0 / cells), size=trials)
    inl = np.zeros((trials, n_in), dtype=np.int64)
    for i, c in enumerate(inputs.inlier_cells):
        inl[:, i] = rng.binomial(fq, c.hit_probability, size=trials)
    totals = out_counts.copy()
    totals[:, :n_in] += inl

    success = np.zeros(trials, dtype=bool)
    for i in range(n_in):
        others = np.delete(totals, i, axis=1)
        best_other = others.max(axis=1) if others.shape[1] else np.zeros(trials, dtype=np.int64)
        success |= (totals[:, i] > best_other) & (inl[:, i] >= 2)
    return float(success.mean())


def binomial_pmf_enumerated(p, n):
    """Full binomial PMF by the Pascal-triangle recurrence (plain floats)."""
    row = [1.0]
    for _ in range(n):
        nxt = [0.0] * (len(row) + 1)
        for k, v in enumerate(row):
            nxt[k] += v * (1.0 - p)
            nxt[k + 1] += v * p
        row = nxt
    return np.asarray(row)


def bernoulli_count_histogram(p, n, trials=100_000, seed=0, chunk=200):
    """Empirical distribution of sum-of-n-Bernoulli(p), by direct simulation."""
    rng = np.random.default_rng(seed)
    counts = np.zeros(n + 1, dtype=np.int64)
    done = 0
    while done < trials:
        m = min(chunk * 1000 // max(n, 1) + 1, trials - done)
        draws = (rng.random((m, n)) < p).sum(axis=1) if n else np.zeros(m, dtype=np.int64)
        counts += np.bincount(draws, minlength=n + 1)
        done += m
    return counts / trials


def csr_cell_histogram(cells, total_votes, trials=100_000, seed=0):
    """Empirical per-cell count distribution when votes pick cells uniformly.

    Returns the pooled distribution over ``trials`` simulated cells (the
    cells of ceil(trials / cells) independent vote drops).
    """
    rng = np.random.default_rng(seed)
    rounds = -(-trials // cells)
    counts = rng.multinomial(total_votes, np.full(cells, 1.0 / cells), size=rounds).ravel()
    counts = counts[:trials]
    return np.bincount(counts) / len(counts)


def total_variation(p, q):
    """TV distance between two discrete distributions (zero-padded)."""
    n = max(len(p), len(q))
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(p)] = p
    b[: len(q)] = q
    return 0.5 * float(np.abs(a - b).sum())


def brute_force_nearest(query_rows, ref_rows):
    """Exact nearest neighbour per query row; ties to the lowest ref index."""
    q = np.atleast_2d(np.asarray(query_rows, dtype=np.float64))
    r = np.atleast_2d(np.asarray(ref_rows, dtype=np.float64))
    picks, dists = [], []
    for row in q:
        d = np.linalg.norm(r - row, axis=1)
        best = d.min()
        picks.append(int(np.nonzero(d == best)[0][0]))
        dists.append(float(best))
    return np.asarray(picks), np.asarray(dists)


def naive_key_pairs(query_keys, ref_keys):
    """All equal-key (query, ref) index pairs by a double loop."""
    pairs = []
    for qi, qk in enumerate(query_keys):
        for ri, rk in enumerate(ref_keys):
            if qk == rk:
                pairs.append((qi, ri))
    return pairs


def uniform_collision_expectation(num_query, num_ref, bits):
    """Expected identity matches between uniform random bit descriptors."""
    return num_query * num_ref / float(2**bits)


def rigid_fit_svd(src, dst):
    """Least-squares rigid 2-D transform via the SVD (Kabsch) route.

    Returns (tx, ty, theta) mapping src points onto dst points.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    h = (src - ms).T @ (dst - md)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, d]) @ u.T
    theta = float(np.arctan2(rot[1, 0], rot[0, 0]))
    t = md - rot @ ms
    return float(t[0]), float(t[1]), theta


def top_eigenvalue_sum(rows, k):
    """Sum of the top-k eigenvalues of the sample covariance of row vectors."""
    x = np.asarray(rows, dtype=np.float64)
    c = np.cov(x, rowvar=False, bias=True)
    vals = np.linalg.eigvalsh(c)
    return float(np.sort(vals)[::-1][:k].sum())


def spearman_rho(a, b):
    """Spearman rank correlation with average ranks for ties."""
    from scipy.stats import spearmanr

    return float(spearmanr(a, b).statistic)
