# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the hot kernels (see _pure.py for the reference text)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline double _bilinear_one(const float[:, ::1] img, double x, double y,
                                 Py_ssize_t h, Py_ssize_t w) nogil:
    cdef Py_ssize_t ix, iy
    cdef double fx, fy, v00, v01, v10, v11
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    ix = <Py_ssize_t>x
    iy = <Py_ssize_t>y
    if w > 1 and ix > w - 2:
        ix = w - 2
    if h > 1 and iy > h - 2:
        iy = h - 2
    fx = x - ix
    fy = y - iy
    v00 = img[iy, ix]
    v01 = img[iy, ix + 1 if ix + 1 < w else w - 1]
    v10 = img[iy + 1 if iy + 1 < h else h - 1, ix]
    v11 = img[iy + 1 if iy + 1 < h else h - 1, ix + 1 if ix + 1 < w else w - 1]
    return (v00 * (1.0 - fx) * (1.0 - fy)
            + v01 * fx * (1.0 - fy)
            + v10 * (1.0 - fx) * fy
            + v11 * fx * fy)


def sample_bilinear(img, xs, ys):
    cdef const float[:, ::1] im = np.ascontiguousarray(img, dtype=np.float32)
    cdef const double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _bilinear_one(im, x[i], y[i], h, w)
    return out_arr


def binary_comparison_bits(img, kp_xy, kp_cos_sin, offsets_a, offsets_b):
    cdef const float[:, ::1] im = np.ascontiguousarray(img, dtype=np.float32)
    cdef const double[:, ::1] xy = np.ascontiguousarray(kp_xy, dtype=np.float64)
    cdef const double[:, ::1] cs = np.ascontiguousarray(kp_cos_sin, dtype=np.float64)
    cdef const double[:, ::1] oa = np.ascontiguousarray(offsets_a, dtype=np.float64)
    cdef const double[:, ::1] ob = np.ascontiguousarray(offsets_b, dtype=np.float64)
    cdef Py_ssize_t n = xy.shape[0], c = oa.shape[0]
    bits_arr = np.zeros((n, c), dtype=np.uint8)
    cdef unsigned char[:, ::1] bits = bits_arr
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    cdef Py_ssize_t i, j
    cdef double cosv, sinv, px, py, ax, ay, bx, by, va, vb
    with nogil:
        for i in range(n):
            cosv = cs[i, 0]
            sinv = cs[i, 1]
            px = xy[i, 0]
            py = xy[i, 1]
            for j in range(c):
                ax = px + cosv * oa[j, 0] - sinv * oa[j, 1]
                ay = py + sinv * oa[j, 0] + cosv * oa[j, 1]
                bx = px + cosv * ob[j, 0] - sinv * ob[j, 1]
                by = py + sinv * ob[j, 0] + cosv * ob[j, 1]
                va = _bilinear_one(im, ax, ay, h, w)
                vb = _bilinear_one(im, bx, by, h, w)
                if va < vb:
                    bits[i, j] = 1
    return bits_arr


def joint_peak_term(inlier_pmf_tail, outlier_pmf, others_weight):
    cdef const double[::1] a = np.ascontiguousarray(inlier_pmf_tail, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(outlier_pmf, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(others_weight, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], nw = w.shape[0]
    if na == 0 or nb == 0:
        return 0.0
    cdef Py_ssize_t m = na + nb - 1
    if nw < m:
        m = nw
    cdef double total = 0.0, conv_j
    cdef Py_ssize_t j, k, klo, khi
    with nogil:
        for j in range(m):
            conv_j = 0.0
            klo = j - (nb - 1)
            if klo < 0:
                klo = 0
            khi = j if j < na - 1 else na - 1
            for k in range(klo, khi + 1):
                conv_j += a[k] * b[j - k]
            total += conv_j * w[j]
    return total
