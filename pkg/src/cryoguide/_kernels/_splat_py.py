"""Pure-numpy splatting kernels (fallback when the compiled extension is absent).

Both backends implement the same contract:

  splat(coords, amps, shape, origin, voxel, sigma) -> (w, h, d) float64 array
      Accumulates one truncated Gaussian per atom:
      data[v] += amp * exp(-|v_world - p|^2 / (2 sigma^2))  for |v_world - p| <= 4 sigma.

  splat_grad(coords, amps, field, origin, voxel, sigma) -> (n, 3) float64 array
      Returns per-atom sums  sum_v field[v] * amp * exp(-d^2/(2 sigma^2)) * (v_world - p) / sigma^2,
      i.e. the inner product of `field` with the coordinate derivative of the splat.

Atoms are processed in input order so summation order (and therefore the exact
floating-point result) is deterministic.
"""

import numpy as np


def _block(p, origin, voxel, shape, rad):
    c = (p - origin) / voxel
    lo = np.maximum(np.ceil(c - rad / voxel), 0).astype(np.int64)
    hi = np.minimum(np.floor(c + rad / voxel), np.asarray(shape) - 1).astype(np.int64)
    return lo, hi


def splat(coords, amps, shape, origin, voxel, sigma):
    coords = np.asarray(coords, dtype=np.float64)
    amps = np.asarray(amps, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    data = np.zeros(tuple(shape), dtype=np.float64)
    rad = 4.0 * sigma
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    for p, a in zip(coords, amps):
        lo, hi = _block(p, origin, voxel, shape, rad)
        if np.any(lo > hi):
            continue
        ax = [np.arange(lo[i], hi[i] + 1) * voxel + origin[i] - p[i] for i in range(3)]
        d2 = (ax[0][:, None, None] ** 2 + ax[1][None, :, None] ** 2
              + ax[2][None, None, :] ** 2)
        blk = np.where(d2 <= rad * rad, a * np.exp(-d2 * inv2s2), 0.0)
        data[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] += blk
    return data


def splat_grad(coords, amps, field, origin, voxel, sigma):
    coords = np.asarray(coords, dtype=np.float64)
    amps = np.asarray(amps, dtype=np.float64)
    field = np.asarray(field, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    shape = field.shape
    grad = np.zeros((len(coords), 3), dtype=np.float64)
    rad = 4.0 * sigma
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    invs2 = 1.0 / (sigma * sigma)
    for ai, (p, a) in enumerate(zip(coords, amps)):
        lo, hi = _block(p, origin, voxel, shape, rad)
        if np.any(lo > hi):
            continue
        ax = [np.arange(lo[i], hi[i] + 1) * voxel + origin[i] - p[i] for i in range(3)]
        d2 = (ax[0][:, None, None] ** 2 + ax[1][None, :, None] ** 2
              + ax[2][None, None, :] ** 2)
        w = np.where(d2 <= rad * rad, a * np.exp(-d2 * inv2s2), 0.0)
        fw = field[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] * w * invs2
        grad[ai, 0] = np.sum(fw * ax[0][:, None, None])
        grad[ai, 1] = np.sum(fw * ax[1][None, :, None])
        grad[ai, 2] = np.sum(fw * ax[2][None, None, :])
    return grad
