"""Torus map fixtures: lifts, Jacobians, preimages, cone-field certificates.

A map is an integer hyperbolic linear part A plus a Z^d-periodic displacement.
Two representations are supported: an explicit trigonometric-polynomial
perturbation F = A + eps*p, and a conjugated form F = G o A o G^{-1} with
G = Id + eps*q a trig diffeomorphism (the displacement is then evaluated
pointwise; it is still Z^d-periodic but not a finite trig polynomial).

All evaluation paths are batched: points are (n, d) arrays, Jacobians
(n, d, d). Lifts commute with integer translations by construction, so
evaluation at |x| ~ 1e6 (backward-orbit work) only needs trig arguments
reduced mod 1, which happens inside the field evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from anosovlab.errors import (
    CertificationFailed,
    IncompleteEnumeration,
    NoConvergence,
    NotLocalDiffeo,
    UnknownFixture,
)
from anosovlab.linear import IntMatrix, LinearModel, analyze_matrix, coset_representatives
from anosovlab.util import grid_points, inv_batched, solve_batched, torus_distance, wrap


@dataclass(frozen=True, eq=False)
class TrigField:
    """Z^d-periodic vector field with finitely many integer-frequency modes.

    Component i is sum_t cos(2 pi k_t.x) c_t + sin(2 pi k_t.x) s_t over that
    coordinate's term list.
    """

    freqs: tuple[np.ndarray, ...]
    cos_coeffs: tuple[np.ndarray, ...]
    sin_coeffs: tuple[np.ndarray, ...]
    dim: int

    @staticmethod
    def from_terms(dim: int, terms: dict[int, list[tuple]]) -> "TrigField":
        """terms maps coordinate index -> [(freq vector, cos coeff, sin coeff), ...]."""
        freqs, coss, sins = [], [], []
        for i in range(dim):
            entries = terms.get(i, [])
            k = np.array([e[0] for e in entries], dtype=float).reshape(len(entries), dim)
            if k.size and not np.allclose(k, np.round(k)):
                raise ValueError(f"non-integer frequency in coordinate {i}: {k}")
            freqs.append(k)
            coss.append(np.array([e[1] for e in entries], dtype=float))
            sins.append(np.array([e[2] for e in entries], dtype=float))
        return TrigField(tuple(freqs), tuple(coss), tuple(sins), dim)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for i in range(self.dim):
            k = self.freqs[i]
            if k.size == 0:
                continue
            theta = 2.0 * np.pi * ((x @ k.T) % 1.0)
            out[..., i] = np.cos(theta) @ self.cos_coeffs[i] + np.sin(theta) @ self.sin_coeffs[i]
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        jac = np.zeros(x.shape + (self.dim,))
        for i in range(self.dim):
            k = self.freqs[i]
            if k.size == 0:
                continue
            theta = 2.0 * np.pi * ((x @ k.T) % 1.0)
            weight = -np.sin(theta) * self.cos_coeffs[i] + np.cos(theta) * self.sin_coeffs[i]
            jac[..., i, :] = 2.0 * np.pi * (weight @ k)
        return jac

    def evaluate_and_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Value and Jacobian sharing one trig pass per coordinate."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        jac = np.zeros(x.shape + (self.dim,))
        for i in range(self.dim):
            k = self.freqs[i]
            if k.size == 0:
                continue
            theta = 2.0 * np.pi * ((x @ k.T) % 1.0)
            c, s = np.cos(theta), np.sin(theta)
            out[..., i] = c @ self.cos_coeffs[i] + s @ self.sin_coeffs[i]
            jac[..., i, :] = 2.0 * np.pi * (
                (-s * self.cos_coeffs[i] + c * self.sin_coeffs[i]) @ k
            )
        return out, jac

    def sup_bound(self) -> float:
        """Rigorous sup of the Euclidean norm: per-coordinate amplitude sums."""
        per_coord = [
            float(np.sum(np.hypot(c, s)))
            for c, s in zip(self.cos_coeffs, self.sin_coeffs)
        ]
        return float(np.linalg.norm(per_coord))

    def scaled(self, factor: float) -> "TrigField":
        return TrigField(
            self.freqs,
            tuple(factor * c for c in self.cos_coeffs),
            tuple(factor * s for s in self.sin_coeffs),
            self.dim,
        )


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


@dataclass(frozen=True, eq=False)
class TorusMap:
    """Hyperbolic torus endomorphism F = A + displacement on the lift.

    Exactly one of `perturbation` (F = A x + eps p(x)) or `conjugator`
    (F = G o A o G^{-1} with G = Id + eps q) is set; with neither, the map is
    linear. epsilon scales the stored field in both cases.
    """

    model: LinearModel
    epsilon: float = 0.0
    perturbation: TrigField | None = None
    conjugator: TrigField | None = None
    label: str = "custom"
    newton_tol: float = 1e-13
    newton_max_iter: int = 80

    def __post_init__(self):
        if self.perturbation is not None and self.conjugator is not None:
            raise ValueError("a map is either perturbative or conjugated, not both")

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def degree(self) -> int:
        return self.model.degree

    @property
    def is_linear(self) -> bool:
        return self.epsilon == 0.0 or (self.perturbation is None and self.conjugator is None)

    # -- inner diffeo G = Id + eps q (conjugated representation) ------------

    def _g(self, x: np.ndarray) -> np.ndarray:
        return x + self.epsilon * self.conjugator.evaluate(x)

    def _g_jacobian(self, x: np.ndarray) -> np.ndarray:
        d = self.dim
        return np.eye(d) + self.epsilon * self.conjugator.jacobian(x)

    def _g_inverse(self, y: np.ndarray) -> np.ndarray:
        eye = np.eye(self.dim)
        z = y.copy()
        for _ in range(self.newton_max_iter):
            val, jac = self.conjugator.evaluate_and_jacobian(z)
            res = z + self.epsilon * val - y
            if float(np.abs(res).max()) <= self.newton_tol * max(1.0, float(np.abs(y).max())):
                return z
            z -= solve_batched(eye + self.epsilon * jac, res)
        raise NoConvergence(f"inner diffeo inversion stalled at residual {float(np.abs(res).max()):.3e}")

    # -- evaluation ----------------------------------------------------------

    def _conjugated_jacobian(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        """DF at x = G(y) given the inner point y = G^{-1}(x) and w = A y."""
        return (self._g_jacobian(w) @ self.model.array) @ inv_batched(self._g_jacobian(y))

    def evaluate(self, x) -> np.ndarray:
        """Lift value F(x); batched."""
        xb, single = _as_batch(x)
        a = self.model.array
        if self.conjugator is not None:
            y = self._g_inverse(xb)
            out = self._g(y @ a.T)
        else:
            out = xb @ a.T
            if self.perturbation is not None and self.epsilon != 0.0:
                out = out + self.epsilon * self.perturbation.evaluate(xb)
        return out[0] if single else out

    def jacobian(self, x) -> np.ndarray:
        xb, single = _as_batch(x)
        a = self.model.array
        if self.conjugator is not None:
            y = self._g_inverse(xb)
            jac = self._conjugated_jacobian(y, y @ a.T)
        else:
            jac = np.broadcast_to(a, xb.shape + (self.dim,)).copy()
            if self.perturbation is not None and self.epsilon != 0.0:
                jac = jac + self.epsilon * self.perturbation.jacobian(xb)
        return jac[0] if single else jac

    def step_with_jacobian(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(wrap(F(t)), DF(t)) sharing one inner inverse solve; batched."""
        tb = np.asarray(t, dtype=float)
        if self.conjugator is not None:
            y = self._g_inverse(tb)
            w = y @ self.model.array.T
            return wrap(self._g(w)), self._conjugated_jacobian(y, w)
        return wrap(self.evaluate(tb)), self.jacobian(tb)

    def invert_with_jacobian(self, y, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """(x, DF(x)) with F(x) = y; the conjugated form reuses the inner point."""
        yb = np.asarray(y, dtype=float)
        if self.conjugator is not None:
            z = np.linalg.solve(self.model.array, self._g_inverse(yb).T).T
            x = self._g(z)
            return x, self._conjugated_jacobian(z, z @ self.model.array.T)
        x = self.invert(yb, tol=tol)
        return x, self.jacobian(x)

    def displacement(self, x) -> np.ndarray:
        """phi(x) = F(x) - A x, Z^d-periodic."""
        xb, single = _as_batch(x)
        if self.conjugator is not None:
            out = self.evaluate(xb) - xb @ self.model.array.T
        elif self.perturbation is not None and self.epsilon != 0.0:
            out = self.epsilon * self.perturbation.evaluate(xb)
        else:
            out = np.zeros_like(xb)
        return out[0] if single else out

    def displacement_jacobian(self, x) -> np.ndarray:
        xb, single = _as_batch(x)
        out = self.jacobian(xb) - self.model.array
        return out[0] if single else out

    def torus_step(self, t: np.ndarray) -> np.ndarray:
        """One forward step of the induced torus map."""
        return wrap(self.evaluate(t))

    def orbit_points(self, starts: np.ndarray, length: int) -> np.ndarray:
        """Torus orbit segments, shape (length, n, d); orbit_points[0] = starts.

        The conjugated form iterates in inner coordinates (one linear step per
        iteration) and maps the whole orbit out in a single batched pass.
        """
        starts = np.atleast_2d(np.asarray(starts, dtype=float))
        out = np.empty((length, starts.shape[0], self.dim))
        if self.conjugator is not None:
            a = self.model.array
            z = self._g_inverse(starts)
            inner = np.empty_like(out)
            for t in range(length):
                inner[t] = z
                z = wrap(z @ a.T)
            out[:] = wrap(self._g(inner.reshape(-1, self.dim))).reshape(out.shape)
            return out
        x = wrap(starts)
        for t in range(length):
            out[t] = x
            x = self.torus_step(x)
        return out

    # -- lift inversion ------------------------------------------------------

    def invert(self, y, tol: float = 1e-12, max_iter: int | None = None) -> np.ndarray:
        """Solve F(x) = y on the lift; unique since the lift is a diffeo.

        Conjugated maps invert exactly by composition; trig maps run a batched
        Newton from the seed A^{-1} y. Residuals are always verified.
        """
        yb, single = _as_batch(y)
        a = self.model.array
        scale = np.maximum(1.0, np.abs(yb).max(axis=1))
        if self.conjugator is not None:
            z = np.linalg.solve(a, self._g_inverse(yb).T).T
            x = self._g(z)
        else:
            x = np.linalg.solve(a, yb.T).T
            if self.perturbation is not None and self.epsilon != 0.0:
                iters = max_iter or self.newton_max_iter
                for _ in range(iters):
                    res = self.evaluate(x) - yb
                    bad = np.abs(res).max(axis=1) > tol * scale
                    if not bad.any():
                        break
                    jac = self.jacobian(x[bad])
                    det = np.linalg.det(jac)
                    if np.any(np.abs(det) < 1e-14):
                        idx = int(np.argmin(np.abs(det)))
                        raise NotLocalDiffeo(
                            f"Jacobian determinant {det[idx]:.3e} near x = {x[bad][idx]}"
                        )
                    x[bad] -= solve_batched(jac, res[bad])
                else:
                    worst = float(np.abs(self.evaluate(x) - yb).max())
                    raise NoConvergence(f"lift inversion stalled at residual {worst:.3e}")
        res = float(np.abs(self.evaluate(x) - yb).max() / scale.max())
        if res > 100.0 * tol:
            raise NoConvergence(f"lift inversion verified residual {res:.3e} exceeds tolerance")
        return x[0] if single else x

    def preimages(self, t: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """All degree-many torus preimages of each point; shape (n, degree, d).

        Branch j corresponds to target lift t + r_j over the fixed coset
        transversal; the ordering is therefore deterministic.
        """
        tb, single = _as_batch(t)
        reps = np.array(coset_representatives(self.model.matrix).representatives, dtype=float)
        n, deg, d = tb.shape[0], reps.shape[0], self.dim
        targets = (tb[:, None, :] + reps[None, :, :]).reshape(n * deg, d)
        try:
            pre = wrap(self.invert(targets, tol=tol))
        except (NoConvergence, NotLocalDiffeo) as exc:
            raise IncompleteEnumeration(f"preimage solve failed: {exc}") from exc
        pre = pre.reshape(n, deg, d)
        for row in range(n):
            pts = pre[row]
            for i in range(deg):
                for j in range(i + 1, deg):
                    if torus_distance(pts[i], pts[j]) < tol:
                        raise IncompleteEnumeration(
                            f"branches {i} and {j} collided at {pts[i]} (distance < {tol})"
                        )
        return pre[0] if single else pre


@dataclass(frozen=True)
class JetSample:
    """Point, lift image, and Jacobian of one evaluation."""

    point: np.ndarray
    image: np.ndarray
    jacobian: np.ndarray


def evaluate_with_jacobian(f: TorusMap, x) -> JetSample:
    xb = np.asarray(x, dtype=float)
    return JetSample(point=xb, image=f.evaluate(xb), jacobian=f.jacobian(xb))


def invert_lift(f: TorusMap, y, tol: float = 1e-12) -> np.ndarray:
    return f.invert(y, tol=tol)


def torus_preimages(f: TorusMap, x, tol: float = 1e-10) -> np.ndarray:
    return f.preimages(x, tol=tol)


def local_diffeo_margin(f: TorusMap, grid_n: int | None = None) -> tuple[float, np.ndarray]:
    """Minimum |det DF| over a grid and its argmin point."""
    if grid_n is None:
        grid_n = 64 if f.dim == 2 else 24
    pts = grid_points(f.dim, grid_n)
    det = np.abs(np.linalg.det(f.jacobian(pts)))
    idx = int(np.argmin(det))
    return float(det[idx]), pts[idx]


# -- cone-field certificate ---------------------------------------------------


@dataclass(frozen=True)
class ConeCertificate:
    """Grid cone-field verification record; margins are minima over the scan.

    This is a numerical check at grid resolution, not a computer-assisted
    proof; grid_sensitivity reports how much the worst margin moves between
    neighbouring grid points.
    """

    certified: bool
    grid_n: int
    iterations: int
    cone_slope: float
    expansion_min: float
    slope_margin_min: float
    backward_expansion_min: float
    backward_slope_margin_min: float
    grid_sensitivity: float
    witness: dict | None = None


def _sphere_mesh(dim: int, n_dirs: int) -> np.ndarray:
    if dim == 0:
        return np.zeros((1, 0))
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = np.linspace(0.0, 2.0 * np.pi, n_dirs, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    raise ValueError(f"direction meshes implemented for subspace dims <= 2, got {dim}")


def _cone_directions(model: LinearModel, slope: float, n_dirs: int, unstable: bool) -> np.ndarray:
    """Unit-core directions v = core + s*slope*cross over boundary and interior shells."""
    b_core = model.unstable_subspace if unstable else model.stable_basis
    b_cross = model.stable_basis if unstable else model.unstable_subspace
    core = _sphere_mesh(b_core.shape[1], n_dirs) @ b_core.T
    cross = _sphere_mesh(b_cross.shape[1], n_dirs) @ b_cross.T
    dirs = [core]
    for shell in (0.5, 1.0):
        combo = core[:, None, :] + shell * slope * cross[None, :, :]
        dirs.append(combo.reshape(-1, model.dim))
    return np.concatenate(dirs, axis=0)


def _chain_forward(f: TorusMap, pts: np.ndarray, n: int) -> np.ndarray:
    """DF^n along forward torus orbits; batched product, newest factor left."""
    t = pts
    acc = np.broadcast_to(np.eye(f.dim), (pts.shape[0], f.dim, f.dim)).copy()
    for _ in range(n):
        acc = f.jacobian(t) @ acc
        t = f.torus_step(t)
    return acc


def _chain_backward(f: TorusMap, pts: np.ndarray, n: int, tol: float) -> np.ndarray:
    """DF^n at the depth-n principal-branch preimage of each point.

    With z_0 = pts and z_k the branch preimage of z_{k-1}, the chain rule
    gives D(F^n)(z_n) = DF(z_1) DF(z_2) ... DF(z_n).
    """
    orbit = [pts]
    t = pts
    for _ in range(n):
        t = f.preimages(t, tol=tol)[:, 0, :]
        orbit.append(t)
    acc = np.broadcast_to(np.eye(f.dim), (pts.shape[0], f.dim, f.dim)).copy()
    for z in orbit[1:]:
        acc = acc @ f.jacobian(z)
    return acc


def anosov_certificate(
    f: TorusMap,
    cone_slope: float = 1.0,
    iterations: int = 1,
    grid_n: int | None = None,
    n_dirs: int = 12,
    preimage_tol: float = 1e-10,
) -> ConeCertificate:
    """Verify invariant cone fields on a grid.

    Forward check: DF^iterations maps the unstable cone of the linear
    splitting strictly into the half-slope cone while expanding the unstable
    projection by a factor > 1. Backward check: the inverse chain along the
    principal preimage branch does the same for the stable cone.

    Raises CertificationFailed (witness attached) if any sampled direction
    violates either containment or expansion.
    """
    model = f.model
    if grid_n is None:
        grid_n = 64 if f.dim == 2 else 24
    pts = grid_points(f.dim, grid_n)
    p_s, p_u = model.stable_projection, model.unstable_projection
    half = 0.5 * cone_slope

    def scan(mats: np.ndarray, dirs: np.ndarray, proj_keep: np.ndarray, proj_off: np.ndarray):
        imgs = np.einsum("nij,kj->nki", mats, dirs)
        keep = np.linalg.norm(imgs @ proj_keep.T, axis=2)
        off = np.linalg.norm(imgs @ proj_off.T, axis=2)
        keep0 = np.linalg.norm(dirs @ proj_keep.T, axis=1)
        expansion = keep / keep0[None, :]
        margin = half - off / keep
        return expansion, margin

    u_dirs = _cone_directions(model, cone_slope, n_dirs, unstable=True)
    fwd = _chain_forward(f, pts, iterations)
    u_exp, u_margin = scan(fwd, u_dirs, p_u, p_s)

    witness = None
    if u_margin.min() <= 0.0 or u_exp.min() <= 1.0:
        n_idx, k_idx = np.unravel_index(int(np.argmin(u_margin)), u_margin.shape)
        witness = {
            "side": "unstable",
            "point": pts[n_idx].tolist(),
            "direction": u_dirs[k_idx].tolist(),
            "slope_margin": float(u_margin.min()),
            "expansion_min": float(u_exp.min()),
        }

    s_exp_min, s_margin_min = float("nan"), float("nan")
    if witness is None:
        s_dirs = _cone_directions(model, cone_slope, n_dirs, unstable=False)
        try:
            back = np.linalg.inv(_chain_backward(f, pts, iterations, preimage_tol))
        except (IncompleteEnumeration, np.linalg.LinAlgError) as exc:
            raise CertificationFailed(
                f"backward branch construction failed: {exc}",
                witness={"side": "stable", "reason": str(exc)},
            ) from exc
        s_exp, s_margin = scan(back, s_dirs, p_s, p_u)
        s_exp_min, s_margin_min = float(s_exp.min()), float(s_margin.min())
        if s_margin.min() <= 0.0 or s_exp.min() <= 1.0:
            n_idx, k_idx = np.unravel_index(int(np.argmin(s_margin)), s_margin.shape)
            witness = {
                "side": "stable",
                "point": pts[n_idx].tolist(),
                "direction": s_dirs[k_idx].tolist(),
                "slope_margin": float(s_margin.min()),
                "expansion_min": float(s_exp.min()),
            }

    per_point = u_margin.min(axis=1).reshape((grid_n,) * f.dim)
    sens = 0.0
    for axis in range(f.dim):
        sens = max(sens, float(np.abs(np.diff(per_point, axis=axis)).max()))

    record = ConeCertificate(
        certified=witness is None,
        grid_n=grid_n,
        iterations=iterations,
        cone_slope=cone_slope,
        expansion_min=float(u_exp.min()),
        slope_margin_min=float(u_margin.min()),
        backward_expansion_min=s_exp_min,
        backward_slope_margin_min=s_margin_min,
        grid_sensitivity=sens,
        witness=witness,
    )
    if witness is not None:
        exc = CertificationFailed(f"cone check failed on the {witness['side']} side", witness=witness)
        exc.record = record
        raise exc
    return record


# -- fixture catalog ----------------------------------------------------------

_A0 = ((3, 1), (1, 1))
_A1 = ((2, 1, 0), (1, 1, 0), (0, 0, 2))
_CUBIC = ((0, 0, -2), (1, 0, 1), (0, 1, 6))

FIXTURE_NAMES = ("linear_A0", "shear_A0", "conjugated_A0", "product_T3", "cubic_companion", "custom")


def fixture_catalog(name: str, epsilon: float = 0.0, custom: dict | None = None) -> TorusMap:
    """Construct a named fixture map.

    linear_A0         the 2x2 linear model, eigenvalues 2 +- sqrt(2)
    shear_A0(eps)     A0 plus the vertical shear (0, eps sin 2 pi x)
    conjugated_A0(eps) smooth conjugate g A0 g^{-1}, g = Id + eps(sin 2 pi y, sin 2 pi x)/10
    product_T3(eps)   block product on T^3: sheared invertible 2x2 block x doubling circle factor
    cubic_companion   3x3 companion of x^3 - 6x^2 - x + 2 (two stable directions)
    custom            built from `custom` dict: matrix, terms or conjugator_terms, label
    """
    if name == "linear_A0":
        if epsilon != 0.0:
            raise ValueError("linear_A0 takes no perturbation scale")
        return TorusMap(model=analyze_matrix(_A0), label="linear_A0")
    if name == "shear_A0":
        field_ = TrigField.from_terms(2, {1: [((1, 0), 0.0, 1.0)]})
        return TorusMap(model=analyze_matrix(_A0), epsilon=epsilon,
                        perturbation=field_, label=f"shear_A0({epsilon:g})")
    if name == "conjugated_A0":
        conj = TrigField.from_terms(2, {0: [((0, 1), 0.0, 0.1)], 1: [((1, 0), 0.0, 0.1)]})
        return TorusMap(model=analyze_matrix(_A0), epsilon=epsilon,
                        conjugator=conj, label=f"conjugated_A0({epsilon:g})")
    if name == "product_T3":
        field_ = TrigField.from_terms(3, {1: [((1, 0, 0), 0.0, 1.0)]})
        return TorusMap(model=analyze_matrix(_A1), epsilon=epsilon,
                        perturbation=field_, label=f"product_T3({epsilon:g})")
    if name == "cubic_companion":
        if epsilon != 0.0:
            raise ValueError("cubic_companion takes no perturbation scale; use custom")
        return TorusMap(model=analyze_matrix(_CUBIC), label="cubic_companion")
    if name == "custom":
        if not custom or "matrix" not in custom:
            raise ValueError("custom fixture needs at least a 'matrix' entry")
        model = analyze_matrix(custom["matrix"])
        label = custom.get("label", "custom")
        terms = custom.get("terms")
        conj_terms = custom.get("conjugator_terms")
        if terms and conj_terms:
            raise ValueError("custom fixture cannot set both terms and conjugator_terms")
        pert = TrigField.from_terms(model.dim, _parse_terms(terms)) if terms else None
        conj = TrigField.from_terms(model.dim, _parse_terms(conj_terms)) if conj_terms else None
        return TorusMap(model=model, epsilon=epsilon, perturbation=pert,
                        conjugator=conj, label=label)
    raise UnknownFixture(f"no fixture named {name!r}; known: {', '.join(FIXTURE_NAMES)}")


def _parse_terms(terms) -> dict[int, list[tuple]]:
    out: dict[int, list[tuple]] = {}
    for coord, entries in terms.items():
        out[int(coord)] = [(tuple(e[0]), float(e[1]), float(e[2])) for e in entries]
    return out
