"""Periodic orbit enumeration, exact counts, spectra, rigidity verdicts."""

import numpy as np
import pytest

from anosovlab.errors import ResourceLimit
from anosovlab.orbits import (
    enumerate_orbits,
    linear_periodic_points,
    refine_orbit,
    rigidity_report,
    stable_spectrum_of_orbit,
)
from anosovlab.util import torus_distance, wrap


def _expected_count(model, n: int) -> int:
    """|det(A^n - I)| computed independently from the integer matrix."""
    a_n = model.matrix.power(n).array.astype(float)
    return int(round(abs(np.linalg.det(a_n - np.eye(model.dim)))))


class TestLinearEnumeration:
    def test_point_counts(self, linear_map):
        for n, want in [(1, 1), (2, 7), (3, 31), (4, 119)]:
            pts = linear_periodic_points(linear_map.model, n)
            assert pts.shape == (want, 2)
            assert want == _expected_count(linear_map.model, n)
            a_n = linear_map.model.matrix.power(n).array.astype(float)
            gap = pts @ a_n.T - pts
            assert np.abs(gap - np.round(gap)).max() < 1e-9

    def test_cubic_counts(self, cubic):
        for n in (1, 2):
            pts = linear_periodic_points(cubic.model, n)
            assert pts.shape[0] == _expected_count(cubic.model, n)
        assert linear_periodic_points(cubic.model, 1).shape[0] == 4

    def test_cap_enforced(self, linear_map):
        with pytest.raises(ResourceLimit):
            linear_periodic_points(linear_map.model, 6, cap=100)
        with pytest.raises(ValueError):
            linear_periodic_points(linear_map.model, 0)

    def test_inventory_complete_with_cycle_counts(self, linear_map):
        inv = enumerate_orbits(linear_map, 4)
        assert inv.complete and not inv.failures
        assert inv.expected_counts == {1: 1, 2: 7, 3: 31, 4: 119}
        # minimal-period points split into cycles: (7-1)/2, (31-1)/3, (119-7)/4
        assert {n: len(inv.by_period(n)) for n in (1, 2, 3, 4)} == {1: 1, 2: 3, 3: 10, 4: 28}
        assert len(inv) == 42

    def test_linear_spectra_exact(self, linear_map):
        rep = rigidity_report(linear_map, 4)
        lam = np.log(2.0 - np.sqrt(2.0))
        assert rep.linear_exponents == pytest.approx((lam,), abs=1e-14)
        assert rep.rigid
        assert rep.max_deviation < 1e-12
        assert rep.max_spread < 1e-12


class TestCycleStructure:
    def test_cycles_are_orbits(self, conjugated05):
        inv = enumerate_orbits(conjugated05, 3)
        assert inv.complete
        for o in inv:
            assert o.points.shape == (o.period, 2)
            for k in range(o.period):
                step = conjugated05.torus_step(o.points[k])
                assert torus_distance(step, o.points[(k + 1) % o.period]) < 1e-9
            assert o.residual <= 1e-11

    def test_minimal_periods(self, conjugated05):
        inv = enumerate_orbits(conjugated05, 3)
        for o in inv:
            for j in range(1, o.period):
                assert torus_distance(o.points[j], o.points[0]) > 1e-6

    def test_translation_class(self, shear05):
        inv = enumerate_orbits(shear05, 2)
        for o in inv:
            y = o.points[0].copy()
            for _ in range(o.period):
                y = shear05.evaluate(y)
            m = y - o.points[0]
            assert np.abs(m - np.round(m)).max() < 1e-9
            assert tuple(int(c) for c in np.round(m)) == o.translation_class

    def test_orbit_ids_sorted(self, conjugated05):
        inv = enumerate_orbits(conjugated05, 3)
        assert [o.orbit_id for o in inv] == list(range(len(inv)))
        periods = [o.period for o in inv]
        assert periods == sorted(periods)

    def test_refine_orbit_finds_continued_fixed_point(self, shear05):
        fixed = enumerate_orbits(shear05, 1).by_period(1)[0]
        o = refine_orbit(shear05, fixed.base_point + np.array([0.012, -0.008]), 1)
        assert torus_distance(o.base_point, fixed.base_point) < 1e-10
        assert o.period == 1


class TestRigidity:
    def test_conjugated_is_rigid(self, conjugated05):
        rep = rigidity_report(conjugated05, 3)
        assert rep.rigid
        assert rep.max_deviation < 1e-10
        assert rep.max_spread < 1e-10
        assert rep.inventory.complete and len(rep.inventory) == 14

    def test_shear_is_not_rigid(self, shear05):
        rep = rigidity_report(shear05, 2)
        assert not rep.rigid
        assert rep.max_deviation > 0.05
        assert rep.max_spread > 0.05

    def test_spectrum_cross_check(self, conjugated05):
        inv = enumerate_orbits(conjugated05, 2)
        lam = np.log(2.0 - np.sqrt(2.0))
        for o in inv:
            spec = stable_spectrum_of_orbit(conjugated05, o)
            assert len(spec) == 1
            assert spec[0] == pytest.approx(lam, abs=1e-10)

    def test_product_counts_and_verdict(self, product05):
        rep = rigidity_report(product05, 3)
        assert rep.inventory.complete
        assert rep.inventory.expected_counts == {1: 1, 2: 15, 3: 112}
        assert len(rep.inventory) == 45
        assert not rep.rigid  # the shear term makes periodic stable rates drift apart

    def test_csv_rows(self, linear_map):
        rep = rigidity_report(linear_map, 2)
        rows = rep.csv_rows()
        assert rows[0] == [
            "period", "orbit_id", "point0_x", "point0_y",
            "m_class", "lambda_s_1", "deviation", "spread",
        ]
        assert len(rows) == 1 + len(rep.inventory)
