# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled splatting kernels; see _splat_py.py for the contract."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, ceil, floor

cnp.import_array()


def splat(coords, amps, shape, origin, voxel, sigma):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(coords, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(amps, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] org = np.ascontiguousarray(origin, dtype=np.float64)
    cdef Py_ssize_t nx = shape[0], ny = shape[1], nz = shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] data = np.zeros((nx, ny, nz), dtype=np.float64)
    cdef double v = voxel, s = sigma
    cdef double rad = 4.0 * s, rad2 = 16.0 * s * s
    cdef double inv2s2 = 1.0 / (2.0 * s * s)
    cdef Py_ssize_t n = c.shape[0], ai, i, j, k
    cdef Py_ssize_t lo0, lo1, lo2, hi0, hi1, hi2
    cdef double px, py, pz, dx, dy, dz, dxy2, d2

    for ai in range(n):
        px = c[ai, 0]; py = c[ai, 1]; pz = c[ai, 2]
        lo0 = <Py_ssize_t>ceil((px - rad - org[0]) / v)
        hi0 = <Py_ssize_t>floor((px + rad - org[0]) / v)
        lo1 = <Py_ssize_t>ceil((py - rad - org[1]) / v)
        hi1 = <Py_ssize_t>floor((py + rad - org[1]) / v)
        lo2 = <Py_ssize_t>ceil((pz - rad - org[2]) / v)
        hi2 = <Py_ssize_t>floor((pz + rad - org[2]) / v)
        if lo0 < 0: lo0 = 0
        if lo1 < 0: lo1 = 0
        if lo2 < 0: lo2 = 0
        if hi0 > nx - 1: hi0 = nx - 1
        if hi1 > ny - 1: hi1 = ny - 1
        if hi2 > nz - 1: hi2 = nz - 1
        for i in range(lo0, hi0 + 1):
            dx = org[0] + i * v - px
            for j in range(lo1, hi1 + 1):
                dy = org[1] + j * v - py
                dxy2 = dx * dx + dy * dy
                if dxy2 > rad2:
                    continue
                for k in range(lo2, hi2 + 1):
                    dz = org[2] + k * v - pz
                    d2 = dxy2 + dz * dz
                    if d2 <= rad2:
                        data[i, j, k] += a[ai] * exp(-d2 * inv2s2)
    return data


def splat_grad(coords, amps, field, origin, voxel, sigma):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(coords, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(amps, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] org = np.ascontiguousarray(origin, dtype=np.float64)
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nz = f.shape[2]
    cdef Py_ssize_t n = c.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grad = np.zeros((n, 3), dtype=np.float64)
    cdef double v = voxel, s = sigma
    cdef double rad = 4.0 * s, rad2 = 16.0 * s * s
    cdef double inv2s2 = 1.0 / (2.0 * s * s)
    cdef double invs2 = 1.0 / (s * s)
    cdef Py_ssize_t ai, i, j, k
    cdef Py_ssize_t lo0, lo1, lo2, hi0, hi1, hi2
    cdef double px, py, pz, dx, dy, dz, dxy2, d2, w
    cdef double gx, gy, gz

    for ai in range(n):
        px = c[ai, 0]; py = c[ai, 1]; pz = c[ai, 2]
        lo0 = <Py_ssize_t>ceil((px - rad - org[0]) / v)
        hi0 = <Py_ssize_t>floor((px + rad - org[0]) / v)
        lo1 = <Py_ssize_t>ceil((py - rad - org[1]) / v)
        hi1 = <Py_ssize_t>floor((py + rad - org[1]) / v)
        lo2 = <Py_ssize_t>ceil((pz - rad - org[2]) / v)
        hi2 = <Py_ssize_t>floor((pz + rad - org[2]) / v)
        if lo0 < 0: lo0 = 0
        if lo1 < 0: lo1 = 0
        if lo2 < 0: lo2 = 0
        if hi0 > nx - 1: hi0 = nx - 1
        if hi1 > ny - 1: hi1 = ny - 1
        if hi2 > nz - 1: hi2 = nz - 1
        gx = 0.0; gy = 0.0; gz = 0.0
        for i in range(lo0, hi0 + 1):
            dx = org[0] + i * v - px
            for j in range(lo1, hi1 + 1):
                dy = org[1] + j * v - py
                dxy2 = dx * dx + dy * dy
                if dxy2 > rad2:
                    continue
                for k in range(lo2, hi2 + 1):
                    dz = org[2] + k * v - pz
                    d2 = dxy2 + dz * dz
                    if d2 <= rad2:
                        w = f[i, j, k] * a[ai] * exp(-d2 * inv2s2) * invs2
                        gx += w * dx
                        gy += w * dy
                        gz += w * dz
        grad[ai, 0] = gx; grad[ai, 1] = gy; grad[ai, 2] = gz
    return grad
