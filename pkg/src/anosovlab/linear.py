"""Exact analysis of the integer linear model and its lattice structure.

The linear model behind every torus map here is an integer matrix that is
hyperbolic (no eigenvalue on the unit circle) and usually irreducible over Q.
This module computes its exact invariants (characteristic polynomial,
degree, irreducibility), numerically safe spectral data (stable lines,
spectral projections via real Schur blocks), transversals of Z^d / A Z^d,
the density of iterated preimage lattices, and deep sublattice vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur, solve_sylvester
from scipy.spatial import cKDTree

from anosovlab import intlinalg as il
from anosovlab.errors import NotHyperbolic, ResourceLimit
from anosovlab.util import canonical_sign, grid_points, wrap


@dataclass(frozen=True)
class IntMatrix:
    """Square integer matrix with nonzero determinant."""

    entries: il.IMatrix

    def __init__(self, rows):
        object.__setattr__(self, "entries", il.as_imatrix(rows))
        if il.int_det(self.entries) == 0:
            raise ValueError(f"matrix {self.entries} is singular over Q")

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def det(self) -> int:
        return il.int_det(self.entries)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)

    def power(self, m: int) -> "IntMatrix":
        return IntMatrix(il.int_pow(self.entries, m))

    def __str__(self) -> str:
        return "[" + "; ".join(" ".join(str(v) for v in row) for row in self.entries) + "]"


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Spectral and arithmetic data of a hyperbolic integer matrix.

    stable_eigenvalues are sorted by increasing modulus; stable_lines[i] is
    the unit eigenvector for stable_eigenvalues[i] (sign: first nonzero
    component positive). Projections are the spectral (oblique) projections
    onto the stable/unstable invariant subspaces, summing to the identity.
    """

    matrix: IntMatrix
    char_poly: tuple[int, ...]
    irreducible: bool
    degree: int
    dim: int
    stable_dim: int
    real_simple_stable: bool
    stable_eigenvalues: tuple[float, ...]
    unstable_moduli: tuple[float, ...]
    stable_lines: np.ndarray = field(repr=False)
    stable_basis: np.ndarray = field(repr=False)
    unstable_subspace: np.ndarray = field(repr=False)
    stable_projection: np.ndarray = field(repr=False)
    unstable_projection: np.ndarray = field(repr=False)
    stable_norm: float
    unstable_conorm: float

    @property
    def hyperbolic(self) -> bool:
        return True

    @property
    def stable_exponents(self) -> tuple[float, ...]:
        return tuple(float(np.log(abs(m))) for m in self.stable_eigenvalues)

    @property
    def array(self) -> np.ndarray:
        return self.matrix.array


def _real_eigenvector(a: np.ndarray, mu: float) -> np.ndarray:
    """Unit kernel vector of (A - mu I) from the SVD, canonically signed."""
    _, _, vt = np.linalg.svd(a - mu * np.eye(a.shape[0]))
    return canonical_sign(vt[-1])


def _ordered_schur_basis(a: np.ndarray, stable_first: bool) -> tuple[np.ndarray, np.ndarray, int]:
    t, z, sdim = schur(a, output="real", sort="iuc" if stable_first else "ouc")
    return t, z, int(sdim)


def _spectral_projection(a: np.ndarray, k: int) -> np.ndarray:
    """Oblique projection onto the stable invariant subspace along the unstable one.

    With stable-first real Schur form T = [[T11, T12], [0, T22]], the projector
    is Z [[I, X], [0, 0]] Z^T where T11 X - X T22 = T12.
    """
    d = a.shape[0]
    if k == 0:
        return np.zeros((d, d))
    if k == d:
        return np.eye(d)
    t, z, sdim = _ordered_schur_basis(a, stable_first=True)
    if sdim != k:
        raise ArithmeticError(f"Schur reordering kept {sdim} stable directions, expected {k}")
    t11, t12, t22 = t[:k, :k], t[:k, k:], t[k:, k:]
    x = solve_sylvester(t11, -t22, t12)
    core = np.zeros((d, d))
    core[:k, :k] = np.eye(k)
    core[:k, k:] = x
    return z @ core @ z.T


def analyze_matrix(matrix, tol: float = 1e-9) -> LinearModel:
    """Full exact + spectral breakdown of an integer hyperbolic matrix.

    Args:
        matrix: IntMatrix or nested ints; square, nonsingular.
        tol: unit-circle margin and eigen-residual tolerance.

    Raises:
        NotHyperbolic: some eigenvalue modulus is within tol of 1.
        IrreducibilityUndecided: dim > 4 (exact factor search unavailable).
    """
    m = matrix if isinstance(matrix, IntMatrix) else IntMatrix(matrix)
    a = m.array
    d = m.dim

    poly = il.char_poly(m.entries)
    irreducible = il.is_irreducible_over_q(poly)
    degree = abs(m.det)

    eigvals = np.linalg.eigvals(a)
    moduli = np.abs(eigvals)
    if np.any(np.abs(moduli - 1.0) <= tol):
        mods = [round(float(x), 12) for x in sorted(moduli)]
        raise NotHyperbolic(f"eigenvalue moduli {mods} touch the unit circle at tol={tol}")

    stable_mask = moduli < 1.0
    k = int(stable_mask.sum())
    stable_vals = eigvals[stable_mask]
    order = np.argsort(np.abs(stable_vals))
    stable_vals = stable_vals[order]

    scale = max(1.0, float(np.abs(a).max()))
    all_real = bool(np.all(np.abs(stable_vals.imag) <= tol * scale))
    separated = True
    mods = np.abs(stable_vals)
    for i in range(k - 1):
        if mods[i + 1] - mods[i] <= 10.0 * tol:
            separated = False
    real_simple = k >= 1 and all_real and separated

    if all_real and k >= 1:
        stable_eigs = tuple(float(v.real) for v in stable_vals)
        lines = np.stack([_real_eigenvector(a, mu) for mu in stable_eigs])
        for mu, v in zip(stable_eigs, lines):
            res = np.linalg.norm(a @ v - mu * v)
            if res > tol * scale * 10.0:
                raise ArithmeticError(f"eigenvector residual {res:.3e} for modulus {mu}")
    else:
        stable_eigs = ()
        lines = np.zeros((0, d))

    p_s = _spectral_projection(a, k)
    p_u = np.eye(d) - p_s
    # Consistency: idempotent and commuting with A, up to roundoff.
    if np.linalg.norm(p_s @ p_s - p_s) > 1e-8 or np.linalg.norm(a @ p_s - p_s @ a) > 1e-8 * scale:
        raise ArithmeticError("spectral projection failed its own consistency check")

    _, z_s, sdim_s = _ordered_schur_basis(a, stable_first=True)
    _, z_u, sdim_u = _ordered_schur_basis(a, stable_first=False)
    stable_basis = z_s[:, :k] if k else np.zeros((d, 0))
    unstable_basis = z_u[:, : d - k]

    if k:
        m_s = stable_basis.T @ a @ stable_basis
        stable_norm = float(np.linalg.norm(m_s, 2))
    else:
        stable_norm = 0.0
    m_u = unstable_basis.T @ a @ unstable_basis
    unstable_conorm = float(np.linalg.svd(m_u, compute_uv=False)[-1])

    unstable_moduli = tuple(sorted(float(x) for x in moduli[~stable_mask]))

    model = LinearModel(
        matrix=m,
        char_poly=poly,
        irreducible=irreducible,
        degree=degree,
        dim=d,
        stable_dim=k,
        real_simple_stable=real_simple,
        stable_eigenvalues=stable_eigs,
        unstable_moduli=unstable_moduli,
        stable_lines=lines,
        stable_basis=stable_basis,
        unstable_subspace=unstable_basis,
        stable_projection=p_s,
        unstable_projection=p_u,
        stable_norm=stable_norm,
        unstable_conorm=unstable_conorm,
    )
    for arr in (model.stable_lines, model.stable_basis, model.unstable_subspace,
                model.stable_projection, model.unstable_projection):
        arr.setflags(write=False)
    return model


@dataclass(frozen=True)
class LatticeCoset:
    """Transversal of Z^d / A Z^d, one representative per coset."""

    matrix: IntMatrix
    representatives: tuple[tuple[int, ...], ...]

    @property
    def degree(self) -> int:
        return len(self.representatives)


def coset_representatives(matrix, cap: int = 200_000) -> LatticeCoset:
    """Deterministic transversal of Z^d / A Z^d.

    Breadth-first search over the quotient group from 0 along the generators
    +-e_i; cosets are labelled by the exact invariant adj(A) v mod |det A|,
    whose kernel is precisely A Z^d. Always finds exactly |det A|
    representatives, independent of matrix entry size.
    """
    m = matrix if isinstance(matrix, IntMatrix) else IntMatrix(matrix)
    absdet = abs(m.det)
    if absdet > cap:
        raise ResourceLimit(f"|det| = {absdet} cosets exceeds cap {cap}")
    adj = il.int_adjugate(m.entries)
    d = m.dim

    start = (0,) * d
    seen = {il.lattice_key(adj, absdet, start)}
    reps = [start]
    queue = [start]
    steps = [tuple(int(i == j) for j in range(d)) for i in range(d)]
    steps += [tuple(-s for s in st) for st in steps]
    while queue and len(reps) < absdet:
        v = queue.pop(0)
        for st in steps:
            w = tuple(a + b for a, b in zip(v, st))
            key = il.lattice_key(adj, absdet, w)
            if key not in seen:
                seen.add(key)
                reps.append(w)
                queue.append(w)
                if len(reps) == absdet:
                    break
    if len(reps) != absdet:
        raise ArithmeticError(f"coset search found {len(reps)} of {absdet} cosets")
    return LatticeCoset(matrix=m, representatives=tuple(reps))


def preimage_points(matrix, k: int, cap: int = 200_000) -> np.ndarray:
    """All |det A|^k torus points x with A^k x in Z^d (digit expansion).

    A transversal of Z^d / A^k Z^d is {r_0 + A r_1 + ... + A^{k-1} r_{k-1}}
    over single-step representatives r_j; the preimage set is its image
    under A^{-k}, wrapped to [0,1)^d.
    """
    m = matrix if isinstance(matrix, IntMatrix) else IntMatrix(matrix)
    if k < 0:
        raise ValueError(f"preimage depth must be >= 0, got {k}")
    degree = abs(m.det)
    if degree**k > cap:
        raise ResourceLimit(f"|det|^k = {degree**k} preimage points exceeds cap {cap}")
    if k == 0:
        return np.zeros((1, m.dim))
    reps = np.array(coset_representatives(m, cap=cap).representatives, dtype=float)
    a = m.array
    pts = np.zeros((1, m.dim))
    for _ in range(k):
        pts = (reps[:, None, :] + pts[None, :, :] @ a.T).reshape(-1, m.dim)
    ak = np.array(il.int_pow(m.entries, k), dtype=float)
    return wrap(np.linalg.solve(ak, pts.T).T)


def preimage_covering_radius(matrix, k: int, grid_n: int | None = None,
                             cap: int = 200_000) -> float:
    """Measured covering radius of the k-th preimage lattice on the torus.

    Maximum over a uniform grid of the torus distance to the nearest preimage
    point. Distances use the 3^d tiling of the fundamental domain, which is
    exact for the Euclidean torus metric. A grid maximum can only
    underestimate the true covering radius.
    """
    m = matrix if isinstance(matrix, IntMatrix) else IntMatrix(matrix)
    if grid_n is None:
        grid_n = 64 if m.dim == 2 else 32
    if grid_n < 32:
        raise ValueError(f"grid_n must be >= 32 for a trustworthy scan, got {grid_n}")
    pts = preimage_points(m, k, cap=cap)
    offsets = grid_points(m.dim, 3) * 3.0 - 1.0
    tiled = (pts[None, :, :] + offsets[:, None, :]).reshape(-1, m.dim)
    tree = cKDTree(tiled)
    dist, _ = tree.query(grid_points(m.dim, grid_n), k=1)
    return float(dist.max())


def covering_radius_table(matrix, k_max: int, grid_n: int | None = None,
                          cap: int = 200_000) -> list[dict]:
    """Covering radii for k = 0..k_max plus the fitted density-law constant.

    The law r_k <= C |det|^{-k/d} with C fitted at k = 1 (C = r_1 |det|^{1/d});
    each row records the measured radius and the bound it is tested against.
    """
    m = matrix if isinstance(matrix, IntMatrix) else IntMatrix(matrix)
    degree = abs(m.det)
    radii = [preimage_covering_radius(m, k, grid_n=grid_n, cap=cap) for k in range(k_max + 1)]
    c = radii[1] * degree ** (1.0 / m.dim) if k_max >= 1 else float("nan")
    rows = []
    for k, r in enumerate(radii):
        rows.append({
            "k": k,
            "radius": r,
            "bound": c * degree ** (-k / m.dim) if k_max >= 1 else float("nan"),
            "fitted_constant": c,
        })
    return rows


def deep_lattice_vectors(matrix, m: int, bound: float) -> tuple[tuple[int, ...], ...]:
    """All n in A^m Z^d with ||n||_2 <= bound, sorted by (norm, lex).

    Candidates are integer vectors in the Euclidean ball; membership is the
    exact adjugate congruence for A^m. Every returned vector is re-verified
    to satisfy A^{-i} n in Z^d for all 1 <= i <= m in exact arithmetic.
    """
    mm = matrix if isinstance(matrix, IntMatrix) else IntMatrix(matrix)
    if m < 0:
        raise ValueError(f"lattice depth must be >= 0, got {m}")
    d = mm.dim
    r = int(np.floor(bound))
    if r < 0:
        return ()
    axes = [np.arange(-r, r + 1)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    cands = np.stack([g.ravel() for g in mesh], axis=-1)
    cands = cands[np.linalg.norm(cands, axis=1) <= bound + 1e-12]

    powers = [il.int_pow(mm.entries, i) for i in range(1, m + 1)]
    checks = [(il.int_adjugate(p), abs(il.int_det(p))) for p in powers]
    kept = []
    for row in cands:
        v = tuple(int(x) for x in row)
        if m == 0 or il.membership_in_image(*checks[-1], v):
            for adj_i, det_i in checks:
                if not il.membership_in_image(adj_i, det_i, v):
                    raise ArithmeticError(f"vector {v} passed depth {m} but failed an intermediate level")
            kept.append(v)
    kept.sort(key=lambda v: (float(np.linalg.norm(v)), v))
    return tuple(kept)


def minimal_deep_vector(matrix, m: int) -> tuple[int, ...]:
    """Shortest nonzero vector of A^m Z^d (ties broken lexicographically,
    sign fixed so the first nonzero entry is positive)."""
    mm = matrix if isinstance(matrix, IntMatrix) else IntMatrix(matrix)
    degree = abs(mm.det)
    bound = max(1.0, float(degree) ** (m / mm.dim))
    while True:
        vecs = [v for v in deep_lattice_vectors(mm, m, bound) if any(v)]
        if vecs:
            canon = []
            for v in vecs:
                first = next(x for x in v if x)
                canon.append(tuple(-x for x in v) if first < 0 else v)
            canon.sort(key=lambda v: (float(np.linalg.norm(v)), v))
            return canon[0]
        bound *= 1.5
