"""Invariant bundles: finest stable splitting and branch-dependent unstable data.

The stable directions at a point are branch-free and come from two QR-chain
flags. Running QR on the transposed, reversed forward cocycle orders the
orthogonal factor so that its trailing columns span the most-contracted
subspaces (the ascending flag V_1 c V_2 c ...). Running QR forward along the
canonical backward lift orbit orders the leading columns by realized growth
(the descending flag D_1 c D_2 c ...). The i-th one-dimensional stable
direction is the intersection V_i cap D_{d-i+1}; for i = 1 the ascending flag
alone suffices.

Unstable directions live on backward branches: each step of a branch walk
picks one preimage coset, and the pushed-forward subspace depends on those
choices exactly when the map fails to be special.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from anosovlab.errors import GapTooSmall
from anosovlab.linear import coset_representatives
from anosovlab.maps import TorusMap
from anosovlab.util import (
    canonical_sign,
    float_cell,
    largest_principal_angle,
    qr_pos,
    subspace_intersection,
    wrap,
)


@dataclass(frozen=True)
class BranchCode:
    """Finite backward-orbit choice: coset index per step."""

    choices: tuple[int, ...]

    def __post_init__(self):
        if any(c < 0 for c in self.choices):
            raise ValueError("branch choices must be nonnegative coset indices")

    @property
    def depth(self) -> int:
        return len(self.choices)

    def validate(self, degree: int) -> None:
        if any(c >= degree for c in self.choices):
            raise ValueError(f"branch choice out of range for degree {degree}: {self.choices}")

    def __str__(self) -> str:
        return "".join(str(c) for c in self.choices)


@dataclass(frozen=True)
class SplittingSample:
    """Stable directions and one branch's unstable subspace at a point."""

    point: np.ndarray
    stable_directions: np.ndarray  # (d, k): unit column per index i
    unstable_subspace: np.ndarray  # (d, d-k): along the lift-inverse branch
    depth: int
    convergence_gap: float
    rates: tuple[float, ...]  # per-step log singular rates, descending


def _forward_jacobians(f: TorusMap, pts: np.ndarray, depth: int) -> np.ndarray:
    jacs = np.empty((depth, pts.shape[0], f.dim, f.dim))
    t = pts
    for j in range(depth):
        t, jacs[j] = f.step_with_jacobian(t)
    return jacs


def _backward_jacobians(f: TorusMap, pts: np.ndarray, depth: int) -> np.ndarray:
    """Jacobians at the lift backward orbit, deepest point first."""
    jacs = np.empty((depth, pts.shape[0], f.dim, f.dim))
    y = pts.copy()
    for j in range(depth):
        y, jacs[depth - 1 - j] = f.invert_with_jacobian(y)
    return jacs


_SEED_FRAMES: dict[int, np.ndarray] = {}


def _generic_frame(d: int) -> np.ndarray:
    """Fixed generic orthonormal seed for the QR recursions.

    An identity seed can sit exactly on invariant coordinate axes (block
    fixtures), in which case the QR flag never reorders columns by growth
    rate and the trailing column is not the most contracted direction.
    """
    q = _SEED_FRAMES.get(d)
    if q is None:
        rng = np.random.default_rng(1905)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        _SEED_FRAMES[d] = q
    return q


def _ascending_frame(jacs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR frame whose trailing columns span contraction flags, with log rates.

    Accumulates the transposed cocycle from its far end; the product's QR
    factor orders directions by decreasing growth, so rates come out
    descending and the last i columns span the i most-contracted directions.
    """
    depth, n, d, _ = jacs.shape
    q = np.broadcast_to(_generic_frame(d), (n, d, d)).copy()
    logs = np.zeros((n, d))
    for j in range(depth - 1, -1, -1):
        q, r = qr_pos(np.swapaxes(jacs[j], 1, 2) @ q)
        logs += np.log(np.abs(r[:, np.arange(d), np.arange(d)]))
    return q, logs / depth


def _descending_frame(jacs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR frame whose leading columns span realized-growth flags at the endpoint."""
    depth, n, d, _ = jacs.shape
    q = np.broadcast_to(_generic_frame(d), (n, d, d)).copy()
    logs = np.zeros((n, d))
    for j in range(depth):
        q, r = qr_pos(jacs[j] @ q)
        logs += np.log(np.abs(r[:, np.arange(d), np.arange(d)]))
    return q, logs / depth


def _check_rates(rates: np.ndarray, k: int, min_gap: float) -> None:
    """rates descending; stable block must be simple and separated from unstable."""
    d = rates.shape[-1]
    worst = np.inf
    for i in range(d - k - 1, d - 1):
        if i >= 0:
            worst = min(worst, float((rates[..., i] - rates[..., i + 1]).min()))
    if worst < min_gap:
        raise GapTooSmall(
            f"singular rate gap {worst:.4f} below {min_gap}; splitting unresolved at this depth"
        )


def _stable_field(
    f: TorusMap, pts: np.ndarray, depth: int, min_gap: float = 0.02
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched stable directions (n, d, k), unstable subspace (n, d, d-k), rates."""
    d, k = f.dim, f.model.stable_dim
    fwd = _forward_jacobians(f, pts, depth)
    q_asc, rates_asc = _ascending_frame(fwd)
    rates = -np.sort(-rates_asc, axis=1)
    _check_rates(rates, k, min_gap)
    bwd = _backward_jacobians(f, pts, depth)
    q_desc, _ = _descending_frame(bwd)
    unstable = q_desc[:, :, : d - k]
    stable = np.empty((pts.shape[0], d, k))
    stable[:, :, 0] = canonical_sign(q_asc[:, :, d - 1])
    for i in range(2, k + 1):
        asc_i = q_asc[:, :, d - i:]
        desc_i = q_desc[:, :, : d - i + 1]
        for row in range(pts.shape[0]):
            stable[row, :, i - 1] = subspace_intersection(asc_i[row], desc_i[row])
    return stable, unstable, rates


def stable_splitting_at(
    f: TorusMap, x, depth: int = 14, min_gap: float = 0.02
) -> SplittingSample:
    """Finest stable splitting at a torus point; gap measured against depth 2N."""
    pt = wrap(np.asarray(x, dtype=float))[None, :]
    s1, u1, _ = _stable_field(f, pt, depth, min_gap)
    s2, u2, rates = _stable_field(f, pt, 2 * depth, min_gap)
    gap = 0.0
    for i in range(s1.shape[2]):
        gap = max(gap, float(np.arccos(np.clip(abs(s1[0, :, i] @ s2[0, :, i]), 0.0, 1.0))))
    gap = max(gap, largest_principal_angle(u1[0], u2[0]))
    return SplittingSample(
        point=pt[0],
        stable_directions=s2[0],
        unstable_subspace=u2[0],
        depth=2 * depth,
        convergence_gap=gap,
        rates=tuple(float(v) for v in rates[0]),
    )


# -- branch-dependent unstable directions -------------------------------------


def _branch_walk_directions(
    f: TorusMap, pts: np.ndarray, codes: np.ndarray, tol: float = 1e-11
) -> np.ndarray:
    """Unstable subspaces (n_pts, n_codes, d, d-k) pushed along coded branches.

    Walk j of point i steps backward through the preimage selected by
    codes[j, step], then pushes the linear unstable subspace forward along
    that branch with per-step orthonormalization.
    """
    reps = np.array(coset_representatives(f.model.matrix).representatives, dtype=float)
    n_pts, d = pts.shape
    n_codes, depth = codes.shape
    t = np.broadcast_to(pts[:, None, :], (n_pts, n_codes, d)).reshape(-1, d).copy()
    trail = np.empty((depth, t.shape[0], d))
    for step in range(depth):
        target = t + np.broadcast_to(
            reps[codes[:, step]][None, :, :], (n_pts, n_codes, d)
        ).reshape(-1, d)
        t = wrap(f.invert(target, tol=tol))
        trail[step] = t
    basis = np.broadcast_to(
        f.model.unstable_subspace, (t.shape[0],) + f.model.unstable_subspace.shape
    ).copy()
    for step in range(depth - 1, -1, -1):
        basis, _ = qr_pos(f.jacobian(trail[step]) @ basis)
    return basis.reshape(n_pts, n_codes, d, -1)


def unstable_direction_along_branch(f: TorusMap, x, code: BranchCode) -> np.ndarray:
    """Orthonormal unstable basis at x along the coded backward branch."""
    code.validate(f.degree)
    pts = wrap(np.asarray(x, dtype=float))[None, :]
    codes = np.array([code.choices], dtype=int)
    basis = _branch_walk_directions(f, pts, codes)[0, 0]
    if basis.shape[1] == 1:
        basis = canonical_sign(basis[None, :, 0])[0][:, None]
    return basis


def branch_spread(f: TorusMap, x, codes: list[BranchCode]) -> float:
    """Largest pairwise principal angle between branch unstable directions at x."""
    if len(codes) < 2:
        raise ValueError("spread needs at least two branch codes")
    for c in codes:
        c.validate(f.degree)
    pts = wrap(np.asarray(x, dtype=float))[None, :]
    arr = np.array([c.choices for c in codes], dtype=int)
    bases = _branch_walk_directions(f, pts, arr)[0]
    worst = 0.0
    for i in range(len(codes)):
        for j in range(i + 1, len(codes)):
            worst = max(worst, largest_principal_angle(bases[i], bases[j]))
    return worst


@dataclass(frozen=True)
class IntegrabilityReport:
    """Branch-direction spread scan and the resulting verdict."""

    integrable: bool
    max_spread: float
    tol: float
    depth: int
    witness: dict | None
    rows: tuple  # (point, code_a, code_b, angle)

    def csv_rows(self) -> list[list[str]]:
        out = [["point", "code_a", "code_b", "angle"]]
        for pt, ca, cb, ang in self.rows:
            out.append([
                " ".join(float_cell(c) for c in pt),
                ca,
                cb,
                float_cell(ang),
            ])
        return out


def _sample_codes(rng: np.random.Generator, degree: int, count: int, depth: int) -> np.ndarray:
    rows = [np.zeros(depth, dtype=int), np.full(depth, degree - 1, dtype=int)]
    while len(rows) < count:
        rows.append(rng.integers(0, degree, depth))
    return np.array(rows[:count], dtype=int)


def integrability_verdict(
    f: TorusMap,
    samples: int = 50,
    codes_per_point: int = 8,
    depth: int = 12,
    tol: float = 1e-3,
    seed: int = 0,
) -> IntegrabilityReport:
    """Integrable iff branch choice never moves the unstable direction by > tol.

    Codes include the all-zeros and all-extreme constants plus seeded random
    draws; the spread is the max pairwise principal angle per sample point.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((samples, f.dim))
    codes = _sample_codes(rng, f.degree, codes_per_point, depth)
    bases = _branch_walk_directions(f, pts, codes)
    labels = ["".join(str(c) for c in row) for row in codes]
    rows = []
    worst = 0.0
    witness = None
    for p in range(samples):
        for i in range(codes.shape[0]):
            for j in range(i + 1, codes.shape[0]):
                ang = largest_principal_angle(bases[p, i], bases[p, j])
                rows.append((tuple(float(c) for c in pts[p]), labels[i], labels[j], ang))
                if ang > worst:
                    worst = ang
                    witness = {
                        "point": tuple(float(c) for c in pts[p]),
                        "code_a": labels[i],
                        "code_b": labels[j],
                        "angle": ang,
                    }
    integrable = worst <= tol
    return IntegrabilityReport(
        integrable=integrable,
        max_spread=worst,
        tol=tol,
        depth=depth,
        witness=None if integrable else witness,
        rows=tuple(rows),
    )
