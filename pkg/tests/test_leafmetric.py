"""Leaf traces, the cocycle solver, the affine leaf metric, and holonomies."""

import numpy as np
import pytest

from anosovlab.errors import (
    NoIntersection,
    ObstructionNonzero,
    RefusedNonIntegrable,
    StepRejected,
)
from anosovlab.leafmetric import (
    affine_distance,
    bundle_coboundary_psi,
    conjugacy_leaf_isometry_check,
    holonomy_isometry_check,
    leaf_invariance_defect,
    livschitz_solve,
    map_polyline,
    quasi_isometry_fit,
    strong_stable_holonomy,
    tangency_residual,
    trace_stable_leaf,
    trace_stable_leaves,
    trace_unstable_leaf,
    unstable_holonomy,
)

MU_S = 2.0 - np.sqrt(2.0)


def _eig_dirs(a: np.ndarray):
    evals, vecs = np.linalg.eig(a)
    i_s = int(np.argmin(np.abs(evals)))
    v_s = vecs[:, i_s] / np.linalg.norm(vecs[:, i_s])
    v_u = vecs[:, 1 - i_s] / np.linalg.norm(vecs[:, 1 - i_s])
    return np.real(v_s), np.real(v_u)


class TestTraces:
    def test_linear_leaf_is_straight(self, linear_map):
        leaf = trace_stable_leaf(linear_map, [0.3, 0.4], L=0.3)
        assert tangency_residual(linear_map, leaf) == 0.0
        v_s, _ = _eig_dirs(linear_map.model.array)
        rel = leaf.points - leaf.points[leaf.center_index]
        cross = rel[:, 0] * v_s[1] - rel[:, 1] * v_s[0]
        assert np.abs(cross).max() < 1e-12
        fit = quasi_isometry_fit([leaf], seed=1)
        assert fit["a"] == pytest.approx(1.0, abs=1e-9)
        assert abs(fit["b"]) < 1e-9

    def test_linear_image_contracts_at_eigenrate(self, linear_map):
        leaf = trace_stable_leaf(linear_map, [0.3, 0.4], L=0.3)
        image = map_polyline(linear_map, leaf)
        assert image.arclength[-1] / leaf.arclength[-1] == pytest.approx(MU_S, abs=1e-12)

    def test_shear_leaf_tangent_and_invariant(self, shear05):
        leaf = trace_stable_leaf(shear05, [0.3, 0.4], L=0.3)
        assert tangency_residual(shear05, leaf) < 1e-6
        assert leaf_invariance_defect(shear05, leaf) < 1e-6

    def test_conjugated_contraction_near_eigenrate(self, conjugated05):
        leaf = trace_stable_leaf(conjugated05, [0.3, 0.4], L=0.3)
        ratio = map_polyline(conjugated05, leaf).arclength[-1] / leaf.arclength[-1]
        assert abs(ratio - MU_S) < 0.05

    def test_batched_traces_match_single(self, shear05):
        starts = np.array([[0.2, 0.6], [0.7, 0.1]])
        batch = trace_stable_leaves(shear05, starts, L=0.1)
        for row, leaf in enumerate(batch):
            single = trace_stable_leaf(shear05, starts[row], L=0.1)
            assert np.array_equal(leaf.points, single.points)

    def test_linear_unstable_trace(self, linear_map):
        leaf = trace_unstable_leaf(linear_map, [0.3, 0.4], L=0.2)
        assert leaf.index == 0
        # arccos saturates around 1.5e-8 at machine-precision alignment
        assert tangency_residual(linear_map, leaf) < 1e-7
        _, v_u = _eig_dirs(linear_map.model.array)
        rel = leaf.points - leaf.points[leaf.center_index]
        cross = rel[:, 0] * v_u[1] - rel[:, 1] * v_u[0]
        assert np.abs(cross).max() < 1e-12

    def test_node_near_arc(self, linear_map):
        leaf = trace_stable_leaf(linear_map, [0.3, 0.4], L=0.1)
        assert leaf.node_near_arc(0.0) == 0
        assert leaf.node_near_arc(float(leaf.arclength[-1])) == len(leaf) - 1

    def test_step_rejected_on_curved_field(self, conjugated05):
        with pytest.raises(StepRejected):
            trace_stable_leaf(conjugated05, [0.3, 0.4], L=0.3, h=0.05, max_turn=1e-12)


class TestCocycleSolver:
    def test_recovers_manufactured_coboundary(self, shear05, rng):
        def psi_true(p):
            p = np.atleast_2d(p)
            return 0.3 * np.cos(2 * np.pi * (p[:, 0] + p[:, 1])) - 0.2 * np.sin(
                2 * np.pi * p[:, 0]
            )

        def phi(p):
            p = np.atleast_2d(p)
            return -0.4 + psi_true(shear05.torus_step(p)) - psi_true(p)

        sol = livschitz_solve(shear05, phi, fourier_order=8)
        assert abs(sol.mean + 0.4) < 1e-3
        assert sol.residual < 1e-3
        assert sol.obstruction < 1e-4
        pts = rng.random((60, 2))
        assert np.abs(sol.transfer(pts) - psi_true(pts)).max() < 1e-4

    def test_non_coboundary_raises_with_best_fit(self, shear05):
        def phi(p):
            return np.cos(2 * np.pi * np.atleast_2d(p)[:, 0])

        with pytest.raises(ObstructionNonzero) as exc_info:
            livschitz_solve(shear05, phi, fourier_order=8)
        sol = exc_info.value.solution
        assert sol is not None
        assert sol.obstruction > 0.5

    def test_linear_cocycle_is_constant(self, linear_map):
        psi = bundle_coboundary_psi(linear_map, 1)
        assert psi.mean == pytest.approx(np.log(MU_S), abs=1e-12)
        assert psi.sup_transfer == 0.0
        assert psi.obstruction < 1e-12
        assert psi.orientation == "transfer"

    def test_cubic_constant_for_both_indices(self, cubic):
        for i in (1, 2):
            psi = bundle_coboundary_psi(cubic, i)
            assert psi.mean == pytest.approx(cubic.model.stable_exponents[i - 1], abs=1e-12)
            assert psi.sup_transfer == 0.0

    def test_conjugated_psi(self, conjugated05, conjugated_psi):
        psi = conjugated_psi
        assert abs(psi.mean - np.log(MU_S)) < 1e-4
        assert psi.residual < 2e-3
        assert psi.obstruction < 1e-4
        assert psi.orientation == "transfer"

    def test_negated_flips(self, conjugated_psi, rng):
        back = conjugated_psi.negated()
        assert back.orientation == "forward"
        pts = rng.random((20, 2))
        assert np.array_equal(back.transfer(pts), -conjugated_psi.transfer(pts))

    def test_csv_rows(self, conjugated_psi):
        rows = conjugated_psi.csv_rows()
        assert rows[0] == ["mode_count", "mean", "residual", "obstruction"]
        assert len(rows) == 2


class TestAffineDistance:
    def test_plain_arclength(self, linear_map):
        leaf = trace_stable_leaf(linear_map, [0.3, 0.4], L=0.1)
        total = affine_distance(linear_map, 1, leaf, 0, len(leaf) - 1, None)
        assert total == pytest.approx(float(leaf.arclength[-1]), abs=1e-12)
        # order does not matter, fractional endpoints interpolate
        assert affine_distance(linear_map, 1, leaf, len(leaf) - 1, 0, None) == pytest.approx(
            total, abs=1e-12
        )
        first_seg = float(np.linalg.norm(leaf.points[1] - leaf.points[0]))
        assert affine_distance(linear_map, 1, leaf, 0, 0.5, None) == pytest.approx(
            0.5 * first_seg, abs=1e-12
        )
        with pytest.raises(ValueError):
            affine_distance(linear_map, 1, leaf, -1, 2, None)

    def test_weight_bounds(self, conjugated05, conjugated_psi):
        leaf = trace_stable_leaf(conjugated05, [0.3, 0.4], L=0.1)
        plain = affine_distance(conjugated05, 1, leaf, 0, len(leaf) - 1, None)
        weighted = affine_distance(conjugated05, 1, leaf, 0, len(leaf) - 1, conjugated_psi)
        hi = float(np.exp(conjugated_psi.sup_transfer))
        assert plain / hi <= weighted <= plain * hi


class TestHolonomy:
    def test_linear_slide_exact(self, linear_map):
        v_s, v_u = _eig_dirs(linear_map.model.array)
        x = np.array([0.3, 0.4])
        y = x + 0.06 * v_s
        xp = x + 0.07 * v_u
        got = unstable_holonomy(linear_map, x, xp, y)
        assert np.abs(got - (x + 0.07 * v_u + 0.06 * v_s)).max() < 1e-9

    def test_no_intersection_when_target_too_short(self, linear_map):
        v_s, v_u = _eig_dirs(linear_map.model.array)
        x = np.array([0.3, 0.4])
        y = x + 0.45 * v_s
        xp = x + 0.07 * v_u
        short = trace_stable_leaf(linear_map, xp, L=0.1)
        with pytest.raises(NoIntersection):
            unstable_holonomy(linear_map, x, xp, y, target_leaf=short)

    def test_refused_on_non_integrable(self, shear05):
        x = np.array([0.3, 0.4])
        with pytest.raises(RefusedNonIntegrable):
            unstable_holonomy(shear05, x, x + 0.01, x + 0.02)
        with pytest.raises(RefusedNonIntegrable):
            holonomy_isometry_check(shear05, samples=2, seed=0)

    def test_plane_only(self, cubic):
        with pytest.raises(ValueError):
            unstable_holonomy(cubic, np.zeros(3), np.zeros(3), np.zeros(3))

    def test_isometry_on_conjugated(self, conjugated05, conjugated_psi):
        rep = holonomy_isometry_check(
            conjugated05, samples=8, seed=23, psi=conjugated_psi, h=5e-3
        )
        assert rep.max_relative_defect < 1e-4
        assert rep.mean_relative_defect <= rep.max_relative_defect
        assert len(rep.rows) == 8
        assert rep.csv_rows()[0] == ["sample", "d_s_source", "d_s_image", "relative_defect"]

    def test_strong_stable_slide(self, cubic):
        e1 = cubic.model.stable_lines[0]
        e2 = cubic.model.stable_lines[1]
        y = np.array([0.2, 0.3, 0.4])
        xp = y + 0.3 * e1 - 0.2 * e2
        got = strong_stable_holonomy(cubic, y, xp, y)
        assert np.abs(got - (y - 0.2 * e2)).max() < 1e-10
        assert np.abs((xp - got) - 0.3 * e1).max() < 1e-10

    def test_strong_stable_requires_split_linear(self, linear_map, shear05):
        with pytest.raises(ValueError):
            strong_stable_holonomy(linear_map, np.zeros(2), np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            strong_stable_holonomy(shear05, np.zeros(2), np.zeros(2), np.zeros(2))


class TestConjugacyIsometry:
    def test_linear_exact(self, linear_map):
        psi = bundle_coboundary_psi(linear_map, 1)
        rep = conjugacy_leaf_isometry_check(linear_map, samples=20, seed=19, psi=psi)
        assert rep.status == "ok"
        assert rep.scale == pytest.approx(1.0, abs=1e-12)
        assert rep.max_relative_deviation < 1e-12

    def test_conjugated_isometric_after_scale(self, conjugated05, conjugated_psi):
        rep = conjugacy_leaf_isometry_check(
            conjugated05, samples=25, seed=19, psi=conjugated_psi
        )
        assert rep.status == "ok"
        assert rep.scale == pytest.approx(1.0, abs=1e-2)
        assert rep.max_relative_deviation < 1e-4
        assert rep.pairs == 25
        assert rep.csv_rows()[0] == ["pair", "d_s", "linear_distance", "scaled_deviation"]

    def test_shear_skipped(self, shear05):
        rep = conjugacy_leaf_isometry_check(shear05, samples=10, seed=19)
        assert rep.status == "skipped_non_rigid"
        assert rep.pairs == 0
        assert np.isnan(rep.scale)
