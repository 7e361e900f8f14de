"""Rigid-body registration: Kabsch superposition and map docking.

Docking is a coarse-to-fine search: a translation scan over a shift lattice
for each of a quasi-uniform rotation set (identity included), scored against
a heavily blurred, zero-mean target; the best candidates are then refined by
coordinate descent on Pearson correlation across a ladder of blur levels,
each evaluated on a decimated grid sized to its blur.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from ._kernels import splat
from .forward import atom_sigma
from .structure import AtomicModel
from .volume import DensityMap


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray      # (3, 3) proper orthogonal
    translation: np.ndarray   # (3,) angstroms

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10:
            raise ValueError("rotation is not orthogonal")
        if abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying `other` first, then self."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def angle_degrees(self) -> float:
        """Rotation angle of the transform, in degrees."""
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def kabsch(mobile: np.ndarray, target: np.ndarray) -> tuple[RigidTransform, float]:
    """Least-squares rigid superposition of `mobile` onto `target`.

    Returns the proper-rotation transform (reflections excluded via the
    determinant sign correction on the smallest singular vector) and the
    post-alignment RMSD.
    """
    P = np.asarray(mobile, dtype=np.float64).reshape(-1, 3)
    Q = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(P) != len(Q):
        raise ValueError(f"kabsch: length mismatch ({len(P)} vs {len(Q)})")
    if len(P) < 3:
        raise ValueError(f"kabsch: need >= 3 points, got {len(P)}")
    cP, cQ = P.mean(axis=0), Q.mean(axis=0)
    H = (P - cP).T @ (Q - cQ)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cQ - R @ cP
    rmsd = float(np.sqrt(np.mean(np.sum((P @ R.T + t - Q) ** 2, axis=1))))
    return RigidTransform(R, t), rmsd


def rotation_about(axis: np.ndarray, degrees: float) -> np.ndarray:
    """Rodrigues rotation matrix about `axis` by `degrees`."""
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise ValueError("rotation_about: axis must be nonzero")
    axis = axis / norm
    a = np.radians(degrees)
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(a) * K + (1.0 - np.cos(a)) * (K @ K)


def quasi_uniform_rotations(n: int) -> list[np.ndarray]:
    """Low-discrepancy rotation set: Halton points mapped through the uniform
    quaternion construction."""
    def vdc(i, base):
        f, r = 1.0, 0.0
        while i > 0:
            f /= base
            r += f * (i % base)
            i //= base
        return r

    out = []
    for i in range(1, n + 1):
        u1, u2, u3 = vdc(i, 2), vdc(i, 3), vdc(i, 5)
        x = np.sqrt(1 - u1) * np.sin(2 * np.pi * u2)
        y = np.sqrt(1 - u1) * np.cos(2 * np.pi * u2)
        z = np.sqrt(u1) * np.sin(2 * np.pi * u3)
        w = np.sqrt(u1) * np.cos(2 * np.pi * u3)
        out.append(np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)]]))
    return out


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float((a @ b) / den) if den > 0 else 0.0


def _level_target(target, voxel, sigma_extra, stride):
    t = gaussian_filter(target, sigma_extra / voxel, mode="constant", truncate=4.0) \
        if sigma_extra > 0 else target
    return t[::stride, ::stride, ::stride]


def _pose_score(coords, amps, R, t, target, origin, voxel, sigma):
    sim = splat(coords @ R.T + t, amps, target.shape, origin, voxel, sigma)
    return _pearson(sim, target)


def _refine_level(coords, amps, com, R, t, target, origin, voxel,
                  sigma_atom, sigma_x, tol=1e-6):
    """Coordinate descent on Pearson over 3 rotation + 3 translation parameters
    at one blur level, evaluated on a blur-matched decimated grid."""
    sigma_eff = float(np.hypot(sigma_atom, sigma_x))
    stride = max(1, int(sigma_eff / (2 * voxel)))
    target_L = _level_target(target, voxel, sigma_x, stride)
    voxel_L = voxel * stride
    axes = np.eye(3)

    def score(Rc, tc):
        return _pose_score(coords, amps, Rc, tc, target_L, origin, voxel_L, sigma_eff)

    sc = score(R, t)
    steps = np.array([max(2.0, sigma_eff)] * 3 + [max(0.5, sigma_eff / 2)] * 3)
    while True:
        improved = False
        for p in range(6):
            for sgn in (1.0, -1.0):
                if p < 3:
                    Rn = rotation_about(axes[p], sgn * steps[p]) @ R
                    tn = t + (com - Rn @ com) - (com - R @ com)
                else:
                    Rn, tn = R, t + sgn * steps[p] * axes[p - 3]
                scn = score(Rn, tn)
                if scn > sc + tol:
                    R, t, sc = Rn, tn, scn
                    improved = True
        if not improved:
            if steps[0] < 0.25:
                return R, t, sc
            steps = steps / 2.0


def dock_to_map(model: AtomicModel, dmap: DensityMap, resolution: float,
                n_rotations: int = 576, seed: int = 0,
                beam: int = 16) -> tuple[RigidTransform, float]:
    """Rigid-dock `model` into `dmap`; returns (transform, Pearson score).

    Rotation candidates are the identity plus `n_rotations` quasi-uniform
    rotations (optionally offset by a seed-drawn rotation, the usual
    randomized low-discrepancy trick; seed 0 keeps the raw set).  Each is
    paired with its best lattice translation against a blurred zero-mean
    surrogate, and the top `beam` poses are refined coarse-to-fine.
    """
    if len(model) == 0:
        raise ValueError("dock_to_map: empty model")
    target = dmap.data
    if float(target.max() - target.min()) == 0.0:
        raise ValueError("dock_to_map: target map has zero variance")
    coords = model.coords()
    amps = model.atomic_numbers().astype(np.float64)
    voxel = dmap.voxel_size
    origin = dmap.origin
    com = coords.mean(axis=0)
    sigma_atom = atom_sigma(resolution)

    sigma_x0 = 8.0
    sigma_eff = float(np.hypot(sigma_atom, sigma_x0))
    S = gaussian_filter(target, np.hypot(sigma_atom, np.sqrt(2) * sigma_x0) / voxel,
                        mode="constant", truncate=4.0)
    S = S - S.mean()

    # 0-inclusive symmetric shift lattice, +-25% of each extent, step sigma_eff/2
    extents = np.array(target.shape) * voxel
    ranges = [max(1, int(e * 0.25 // voxel)) for e in extents]
    step = max(1, int(sigma_eff / (2 * voxel)))
    ax = [np.unique(np.concatenate([np.arange(0, r + 1, step),
                                    -np.arange(0, r + 1, step)]))
          for r in ranges]
    shifts = np.array([(sx, sy, sz) for sx in ax[0] for sy in ax[1] for sz in ax[2]],
                      dtype=np.float64)

    rotations = [np.eye(3)] + quasi_uniform_rotations(n_rotations)
    if seed != 0:
        rng = np.random.default_rng(seed)
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        off = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)]])
        rotations = [np.eye(3)] + [off @ R for R in rotations[1:]]

    cands = []
    for R in rotations:
        rot = (coords - com) @ R.T + com
        idx = (rot - origin) / voxel
        pts = idx[None, :, :] + shifts[:, None, :]
        vals = map_coordinates(S, pts.reshape(-1, 3).T, order=1, mode="constant")
        dots = vals.reshape(len(shifts), -1).sum(axis=1)
        j = int(np.argmax(dots))
        cands.append((dots[j], R, shifts[j] * voxel))
    cands.sort(key=lambda c: -c[0])   # stable: ties keep candidate order

    pool = []
    for _, R, tshift in cands[:beam]:
        t = com - R @ com + tshift
        pool.append(_refine_level(coords, amps, com, R, t, target, origin, voxel,
                                  sigma_atom, sigma_x0))
    pool.sort(key=lambda c: -c[2])

    pool2 = []
    for R, t, _ in pool[:4]:
        for sx in (4.0, 2.0):
            R, t, sc = _refine_level(coords, amps, com, R, t, target, origin, voxel,
                                     sigma_atom, sx)
        pool2.append((R, t, sc))
    pool2.sort(key=lambda c: -c[2])

    R, t, _ = pool2[0]
    for sx in (1.0, 0.0):
        R, t, sc = _refine_level(coords, amps, com, R, t, target, origin, voxel,
                                 sigma_atom, sx)
    return RigidTransform(R, t), float(sc)
