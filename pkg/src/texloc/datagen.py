"""Synthetic dataset builder: worlds, reference grids, queries, test sets.

A dataset is a procedural ground-texture world photographed twice over:
a regular grid of overlapping reference views (the map material) and a
pool of randomly posed query views (the evaluation material). Each test
image set adds a short sequential walk of extra queries, pairing every
walk pose with its ten closest overlapping references and with ten
references drawn from a shared non-overlapping pool.

Everything derives from one integer seed; writing the same spec twice
produces byte-identical directories.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from shapely.geometry import Polygon

from .errors import EmptyInputError
from .evaluation import QueryCase, RefImage, TestImageSet
from .geometry import Pose2D, transform_point, wrap_angle
from .imaging import TextureWorld, _view_footprint, load_image, render_view, save_image

_MANIFEST_NAME = "manifest.json"
_MANIFEST_VERSION = 1


@dataclass(frozen=True)
class DatasetSpec:
    """Everything needed to regenerate a dataset from scratch."""

    seed: int = 0
    world_width: int = 1600
    world_height: int = 1200
    style: str = "speckle"
    density: float = 1.0
    contrast: float = 40.0
    noise_sigma: float = 0.0
    view_width: int = 320
    view_height: int = 240
    ref_overlap: float = 0.5  # fraction of view shared between grid neighbors
    num_queries: int = 40
    num_test_sets: int = 1
    queries_per_test_set: int = 10
    inlier_refs_per_query: int = 10
    outlier_refs_per_query: int = 10
    outlier_pool_size: int = 15
    walk_step_fraction: float = 0.35  # test-walk step as a fraction of view width

    def __post_init__(self):
        if not (0.0 <= self.ref_overlap < 1.0):
            raise ValueError("reference overlap must lie in [0, 1)")
        if self.outlier_pool_size < self.outlier_refs_per_query:
            raise ValueError("outlier pool must cover the per-query draw")
        if self.walk_step_fraction <= 0.0:
            raise ValueError("walk step must be positive")


@dataclass
class DatasetBundle:
    spec: DatasetSpec
    references: list = field(default_factory=list)  # RefImage
    queries: list = field(default_factory=list)  # QueryCase
    test_sets: list = field(default_factory=list)  # TestImageSet

    def world(self) -> TextureWorld:
        s = self.spec
        return TextureWorld(
            seed=s.seed,
            width=s.world_width,
            height=s.world_height,
            style=s.style,
            density=s.density,
            contrast=s.contrast,
        )


def footprint_polygon(pose: Pose2D, width: int, height: int) -> Polygon:
    corners = _view_footprint(pose, width, height)
    return Polygon(corners[[0, 1, 3, 2]])


def views_overlap(a: Pose2D, b: Pose2D, width: int, height: int) -> bool:
    pa = footprint_polygon(a, width, height)
    pb = footprint_polygon(b, width, height)
    return pa.intersection(pb).area > 0.0


def reference_grid_poses(spec: DatasetSpec) -> list:
    """Axis-aligned grid covering the world interior with the spec overlap."""
    vw, vh = spec.view_width, spec.view_height
    dx = max(1.0, vw * (1.0 - spec.ref_overlap))
    dy = max(1.0, vh * (1.0 - spec.ref_overlap))
    max_x = spec.world_width - vw
    max_y = spec.world_height - vh
    if max_x < 0 or max_y < 0:
        raise EmptyInputError("world smaller than a single view")
    xs = list(np.arange(0.0, max_x + 1e-6, dx))
    ys = list(np.arange(0.0, max_y + 1e-6, dy))
    if xs[-1] < max_x - 1e-6:
        xs.append(float(max_x))
    if ys[-1] < max_y - 1e-6:
        ys.append(float(max_y))
    return [Pose2D(float(x), float(y), 0.0) for y in ys for x in xs]


def _pose_margin(spec: DatasetSpec) -> float:
    # a fully rotated view must stay inside the world
    return math.hypot(spec.view_width, spec.view_height) / 2.0 + 1.0


def _random_query_pose(spec: DatasetSpec, rng: np.random.Generator) -> Pose2D:
    m = _pose_margin(spec)
    cx = rng.uniform(m, spec.world_width - m)
    cy = rng.uniform(m, spec.world_height - m)
    theta = rng.uniform(-math.pi, math.pi)
    return _center_to_corner(spec, cx, cy, theta)


def _center_to_corner(spec: DatasetSpec, cx: float, cy: float, theta: float) -> Pose2D:
    """Pose whose view *center* lands at (cx, cy) with heading theta."""
    hx, hy = (spec.view_width - 1) / 2.0, (spec.view_height - 1) / 2.0
    c, s = math.cos(theta), math.sin(theta)
    return Pose2D(cx - (hx * c - hy * s), cy - (hx * s + hy * c), theta)


def _render(spec: DatasetSpec, world: TextureWorld, pose: Pose2D, seed):
    return render_view(
        world,
        pose,
        view_size=(spec.view_width, spec.view_height),
        noise_sigma=spec.noise_sigma,
        noise_seed=seed,
    )


def _walk_poses(spec: DatasetSpec, rng: np.random.Generator, count: int) -> list:
    """Short sequential trajectory of query poses inside the safe margin."""
    m = _pose_margin(spec)
    cx = rng.uniform(m, spec.world_width - m)
    cy = rng.uniform(m, spec.world_height - m)
    theta = rng.uniform(-math.pi, math.pi)
    step = spec.walk_step_fraction * spec.view_width
    poses = []
    for _ in range(count):
        poses.append(_center_to_corner(spec, cx, cy, theta))
        heading = rng.uniform(-math.pi, math.pi)
        cx = min(max(cx + step * math.cos(heading), m), spec.world_width - m)
        cy = min(max(cy + step * math.sin(heading), m), spec.world_height - m)
        theta = wrap_angle(theta + rng.uniform(-0.4, 0.4))
    return poses


def _query_center(spec: DatasetSpec, pose: Pose2D) -> tuple:
    return transform_point(pose, (spec.view_width - 1) / 2.0, (spec.view_height - 1) / 2.0)


def generate_dataset(spec: DatasetSpec) -> DatasetBundle:
    """Build the full bundle in memory. Deterministic per spec."""
    world = TextureWorld(
        seed=spec.seed,
        width=spec.world_width,
        height=spec.world_height,
        style=spec.style,
        density=spec.density,
        contrast=spec.contrast,
    )
    rng = np.random.default_rng([spec.seed, 0xDA7A])

    references = []
    for i, pose in enumerate(reference_grid_poses(spec)):
        img = _render(spec, world, pose, seed=[spec.seed, 0, i])
        references.append(RefImage(image_id=i, image=img, pose=pose))

    queries = []
    qid = 0
    for _ in range(spec.num_queries):
        pose = _random_query_pose(spec, rng)
        img = _render(spec, world, pose, seed=[spec.seed, 1, qid])
        queries.append(QueryCase(query_id=qid, image=img, truth=pose))
        qid += 1

    test_sets = []
    for _ in range(spec.num_test_sets):
        cases = []
        for pose in _walk_poses(spec, rng, spec.queries_per_test_set):
            img = _render(spec, world, pose, seed=[spec.seed, 1, qid])
            cases.append(QueryCase(query_id=qid, image=img, truth=pose))
            qid += 1
        test_sets.append(_assemble_test_set(spec, references, cases, rng))
    return DatasetBundle(spec=spec, references=references, queries=queries, test_sets=test_sets)


def _assemble_test_set(
    spec: DatasetSpec, references: list, cases: list, rng: np.random.Generator
) -> TestImageSet:
    vw, vh = spec.view_width, spec.view_height
    ref_polys = {r.image_id: footprint_polygon(r.pose, vw, vh) for r in references}

    inlier_refs = []
    for case in cases:
        qpoly = footprint_polygon(case.truth, vw, vh)
        qcx, qcy = _query_center(spec, case.truth)
        overlapping = []
        for r in references:
            if ref_polys[r.image_id].intersection(qpoly).area > 0.0:
                rcx, rcy = _query_center(spec, r.pose)
                overlapping.append((math.hypot(rcx - qcx, rcy - qcy), r.image_id, r))
        overlapping.sort(key=lambda t: (t[0], t[1]))
        chosen = [r for _, _, r in overlapping[: spec.inlier_refs_per_query]]
        if len(chosen) < 2:
            raise EmptyInputError(
                f"query {case.query_id} overlaps only {len(chosen)} references; "
                "densify the reference grid"
            )
        inlier_refs.append(chosen)

    # one non-overlapping pool shared by the whole set keeps feature
    # extraction cache-friendly without breaking the per-query draw
    qpolys = [footprint_polygon(c.truth, vw, vh) for c in cases]
    eligible = [
        r
        for r in references
        if all(ref_polys[r.image_id].intersection(qp).area == 0.0 for qp in qpolys)
    ]
    if len(eligible) < spec.outlier_refs_per_query:
        raise EmptyInputError("not enough non-overlapping references for the outlier pool")
    pool_size = min(spec.outlier_pool_size, len(eligible))
    pool_idx = rng.choice(len(eligible), size=pool_size, replace=False)
    pool = [eligible[i] for i in sorted(int(i) for i in pool_idx)]

    outlier_refs = []
    for _ in cases:
        take = rng.choice(pool_size, size=spec.outlier_refs_per_query, replace=False)
        outlier_refs.append([pool[i] for i in sorted(int(i) for i in take)])

    xs, ys = [], []
    for poly in ref_polys.values():
        px, py = poly.exterior.xy
        xs.extend(px)
        ys.extend(py)

    return TestImageSet(
        queries=cases,
        inlier_refs=inlier_refs,
        outlier_refs=outlier_refs,
        target_map_images=len(references),
        map_extent=(max(xs) - min(xs), max(ys) - min(ys)),
    )


# ---------------------------------------------------------------------------
# disk layout: refs/*.png, queries/*.png, manifest.json


def save_dataset(bundle: DatasetBundle, root) -> None:
    import os

    refs_dir = os.path.join(root, "refs")
    queries_dir = os.path.join(root, "queries")
    os.makedirs(refs_dir, exist_ok=True)
    os.makedirs(queries_dir, exist_ok=True)

    def pose_dict(p: Pose2D) -> dict:
        return {"x": p.x, "y": p.y, "theta": p.theta}

    refs = []
    for r in bundle.references:
        fname = f"ref_{r.image_id:05d}.png"
        save_image(r.image, os.path.join(refs_dir, fname))
        refs.append({"id": r.image_id, "file": f"refs/{fname}", "pose": pose_dict(r.pose)})

    queries = []
    all_queries = list(bundle.queries) + [q for ts in bundle.test_sets for q in ts.queries]
    for q in all_queries:
        fname = f"query_{q.query_id:05d}.png"
        save_image(q.image, os.path.join(queries_dir, fname))
        queries.append({"id": q.query_id, "file": f"queries/{fname}", "pose": pose_dict(q.truth)})

    sets = [
        {
            "query_ids": [q.query_id for q in ts.queries],
            "inlier_refs": [[r.image_id for r in refs_] for refs_ in ts.inlier_refs],
            "outlier_refs": [[r.image_id for r in refs_] for refs_ in ts.outlier_refs],
            "target_map_images": ts.target_map_images,
            "map_extent": list(ts.map_extent) if ts.map_extent is not None else None,
        }
        for ts in bundle.test_sets
    ]
    manifest = {
        "format_version": _MANIFEST_VERSION,
        "spec": asdict(bundle.spec),
        "references": refs,
        "queries": queries,
        "num_plain_queries": len(bundle.queries),
        "test_sets": sets,
    }
    with open(os.path.join(root, _MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(root) -> DatasetBundle:
    import os

    with open(os.path.join(root, _MANIFEST_NAME), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != _MANIFEST_VERSION:
        raise EmptyInputError(f"unsupported dataset manifest version in {root}")
    spec = DatasetSpec(**manifest["spec"])

    def pose_of(d: dict) -> Pose2D:
        return Pose2D(d["x"], d["y"], d["theta"])

    references = [
        RefImage(
            image_id=entry["id"],
            image=load_image(os.path.join(root, entry["file"])),
            pose=pose_of(entry["pose"]),
        )
        for entry in manifest["references"]
    ]
    ref_by_id = {r.image_id: r for r in references}

    cases = [
        QueryCase(
            query_id=entry["id"],
            image=load_image(os.path.join(root, entry["file"])),
            truth=pose_of(entry["pose"]),
        )
        for entry in manifest["queries"]
    ]
    case_by_id = {c.query_id: c for c in cases}
    queries = cases[: manifest["num_plain_queries"]]

    test_sets = [
        TestImageSet(
            queries=[case_by_id[i] for i in ts["query_ids"]],
            inlier_refs=[[ref_by_id[i] for i in ids] for ids in ts["inlier_refs"]],
            outlier_refs=[[ref_by_id[i] for i in ids] for ids in ts["outlier_refs"]],
            target_map_images=ts["target_map_images"],
            map_extent=tuple(ts["map_extent"]) if ts.get("map_extent") else None,
        )
        for ts in manifest["test_sets"]
    ]
    return DatasetBundle(spec=spec, references=references, queries=queries, test_sets=test_sets)
