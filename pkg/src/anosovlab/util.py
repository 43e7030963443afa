"""Shared numeric helpers: torus geometry, batched QR, subspace angles."""

from __future__ import annotations

import numpy as np


def wrap(x: np.ndarray) -> np.ndarray:
    """Reduce coordinates to the fundamental domain [0, 1)^d.

    x % 1.0 rounds values a hair below an integer up to exactly 1.0, which
    would escape the half-open cell; fold that boundary case back to 0.
    """
    w = np.asarray(x, dtype=float) % 1.0
    return np.where(w == 1.0, 0.0, w)


def torus_delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shortest representative of a - b on the torus, componentwise in [-1/2, 1/2].

    The Euclidean norm is coordinate-separable, so nearest-integer reduction
    per coordinate realizes the minimum over all integer translates.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - np.round(d)


def torus_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(torus_delta(a, b), axis=-1)


def grid_points(d: int, n: int) -> np.ndarray:
    """Uniform grid (i_1/n, ..., i_d/n), shape (n^d, d), lexicographic order."""
    axes = [np.arange(n) / n] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def qr_pos(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR with nonnegative R diagonal; batched over leading axes."""
    q, r = np.linalg.qr(m)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    sign = np.where(diag < 0.0, -1.0, 1.0)
    q = q * sign[..., None, :]
    r = r * sign[..., :, None]
    return q, r


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize a zero vector")
    return v / n


def canonical_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip sign so the first component exceeding tol is positive; batched."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    vv = v[None, :] if single else v
    out = vv.copy()
    for row in out:
        for x in row:
            if abs(x) > tol:
                if x < 0.0:
                    row *= -1.0
                break
    return out[0] if single else out


def orthonormal_columns(m: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column span (thin QR)."""
    q, _ = qr_pos(np.asarray(m, dtype=float))
    return q


def largest_principal_angle(b1: np.ndarray, b2: np.ndarray) -> float:
    """Largest principal angle (radians) between equal-dimension subspaces.

    Inputs are matrices whose columns span the subspaces; orthonormalized
    here, so callers may pass raw spanning sets.
    """
    q1 = orthonormal_columns(np.atleast_2d(np.asarray(b1, dtype=float).T).T)
    q2 = orthonormal_columns(np.atleast_2d(np.asarray(b2, dtype=float).T).T)
    if q1.shape != q2.shape:
        raise ValueError(f"subspace dimensions differ: {q1.shape[1]} vs {q2.shape[1]}")
    sigma = np.linalg.svd(q1.T @ q2, compute_uv=False)
    return float(np.arccos(np.clip(sigma.min(), -1.0, 1.0)))


def vector_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between lines spanned by u and v (sign-insensitive)."""
    uu = unit(np.asarray(u, dtype=float).ravel())
    vv = unit(np.asarray(v, dtype=float).ravel())
    return float(np.arccos(np.clip(abs(float(uu @ vv)), 0.0, 1.0)))


def subspace_intersection(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Unit vector spanning the (assumed 1-D) intersection of two subspaces.

    Minimizes the summed squared distance to both subspaces: the smallest
    eigenvector of (I - P1) + (I - P2). The smallest eigenvalue doubles as a
    residual; callers check it when the intersection is supposed to exist.
    """
    q1 = orthonormal_columns(b1)
    q2 = orthonormal_columns(b2)
    d = q1.shape[0]
    m = 2.0 * np.eye(d) - q1 @ q1.T - q2 @ q2.T
    w, v = np.linalg.eigh(m)
    vec = v[:, 0]
    return canonical_sign(vec / np.linalg.norm(vec))


def subspace_intersection_residual(b1: np.ndarray, b2: np.ndarray) -> float:
    q1 = orthonormal_columns(b1)
    q2 = orthonormal_columns(b2)
    d = q1.shape[0]
    m = 2.0 * np.eye(d) - q1 @ q1.T - q2 @ q2.T
    w = np.linalg.eigvalsh(m)
    return float(w[0])


def solve_batched(mats: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Solve stacked linear systems; mats (..., d, d), vecs (..., d).

    d <= 3 uses the adjugate closed form: forward error is cond-limited either
    way, and it avoids a per-matrix LAPACK round trip on large stacks.
    """
    d = mats.shape[-1]
    if d in (2, 3):
        return np.einsum("...ij,...j->...i", inv_batched(mats), vecs)
    return np.linalg.solve(mats, vecs[..., None])[..., 0]


def inv_batched(mats: np.ndarray) -> np.ndarray:
    """Inverses of stacked small matrices; closed form for d <= 3."""
    d = mats.shape[-1]
    if d == 2:
        a, b = mats[..., 0, 0], mats[..., 0, 1]
        c, e = mats[..., 1, 0], mats[..., 1, 1]
        det = a * e - b * c
        out = np.empty_like(mats)
        out[..., 0, 0] = e
        out[..., 0, 1] = -b
        out[..., 1, 0] = -c
        out[..., 1, 1] = a
        return out / det[..., None, None]
    if d == 3:
        cof = np.empty_like(mats)
        for i in range(3):
            for j in range(3):
                r = [(i + 1) % 3, (i + 2) % 3]
                c = [(j + 1) % 3, (j + 2) % 3]
                cof[..., j, i] = (
                    mats[..., r[0], c[0]] * mats[..., r[1], c[1]]
                    - mats[..., r[0], c[1]] * mats[..., r[1], c[0]]
                )
        det = (
            mats[..., 0, 0] * cof[..., 0, 0]
            + mats[..., 0, 1] * cof[..., 1, 0]
            + mats[..., 0, 2] * cof[..., 2, 0]
        )
        return cof / det[..., None, None]
    return np.linalg.inv(mats)


def float_cell(x) -> str:
    """Canonical CSV rendering: shortest round-trip decimal, stable across runs."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")
