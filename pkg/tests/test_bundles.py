"""Invariant splittings and branch-dependent unstable directions."""

import numpy as np
import pytest

from anosovlab.bundles import (
    BranchCode,
    branch_spread,
    integrability_verdict,
    stable_splitting_at,
    unstable_direction_along_branch,
)
from anosovlab.errors import GapTooSmall


def _unit_eigvec(a: np.ndarray, which: int) -> np.ndarray:
    """Unit eigenvector for the eigenvalue ranked `which` by modulus (ascending)."""
    evals, vecs = np.linalg.eig(a)
    idx = np.argsort(np.abs(evals))[which]
    v = np.real(vecs[:, idx])
    return v / np.linalg.norm(v)


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.arccos(min(1.0, abs(float(u @ v)))))


class TestStableSplitting:
    def test_linear_directions_exact(self, linear_map):
        s = stable_splitting_at(linear_map, [0.3, 0.7])
        a = linear_map.model.array
        assert _angle(s.stable_directions[:, 0], _unit_eigvec(a, 0)) < 1e-12
        assert _angle(s.unstable_subspace[:, 0], _unit_eigvec(a, 1)) < 1e-12
        assert s.convergence_gap < 1e-10
        assert s.rates[0] > 0 > s.rates[1]
        # QR preserves determinants, so per-step rates sum to log|det A|
        assert sum(s.rates) == pytest.approx(np.log(2.0), abs=1e-9)

    def test_cubic_two_stable_directions(self, cubic):
        s = stable_splitting_at(cubic, [0.2, 0.5, 0.8], depth=32)
        a = cubic.model.array
        assert s.stable_directions.shape == (3, 2)
        assert _angle(s.stable_directions[:, 0], _unit_eigvec(a, 0)) < 1e-4
        assert _angle(s.stable_directions[:, 1], _unit_eigvec(a, 1)) < 1e-4
        assert list(s.rates) == sorted(s.rates, reverse=True)
        assert sum(r < 0 for r in s.rates) == 2

    def test_shear_field_is_invariant(self, shear05, rng):
        """Df(x) e_s(x) must line up with e_s(f x)."""
        for x in rng.random((6, 2)):
            here = stable_splitting_at(shear05, x)
            there = stable_splitting_at(shear05, shear05.torus_step(x))
            v = shear05.jacobian(x) @ here.stable_directions[:, 0]
            v /= np.linalg.norm(v)
            assert _angle(v, there.stable_directions[:, 0]) < 1e-6

    def test_product_stable_avoids_circle_factor(self, product05):
        """The third coordinate is a doubling factor; the stable direction
        lives entirely in the invertible block."""
        s = stable_splitting_at(product05, [0.3, 0.6, 0.1])
        assert abs(s.stable_directions[2, 0]) < 1e-9
        assert s.stable_directions.shape == (3, 1)
        assert sum(r < 0 for r in s.rates) == 1

    def test_convergence_gap_decays_at_spectral_ratio(self, conjugated05):
        # compare only depths 3..7: past that the angles saturate near
        # machine epsilon and the fit flattens
        gaps = [
            stable_splitting_at(conjugated05, [0.37, 0.21], depth=n).convergence_gap
            for n in range(3, 8)
        ]
        slope = np.polyfit(np.arange(3, 8), np.log(gaps), 1)[0]
        target = np.log((2.0 - np.sqrt(2.0)) / (2.0 + np.sqrt(2.0)))
        assert abs(slope - target) / abs(target) < 0.05

    def test_gap_threshold_enforced(self, linear_map):
        with pytest.raises(GapTooSmall):
            stable_splitting_at(linear_map, [0.3, 0.7], min_gap=10.0)


class TestBranchCode:
    def test_str_and_depth(self):
        code = BranchCode((0, 1, 2, 1))
        assert str(code) == "0121"
        assert code.depth == 4

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            BranchCode((0, -1))

    def test_validate_against_degree(self):
        BranchCode((0, 1)).validate(2)
        with pytest.raises(ValueError):
            BranchCode((0, 2)).validate(2)


class TestBranchDirections:
    def test_linear_branch_independent(self, linear_map):
        a = linear_map.model.array
        vu = _unit_eigvec(a, 1)
        for code in (BranchCode((0,) * 10), BranchCode((1, 0) * 5)):
            u = unstable_direction_along_branch(linear_map, [0.2, 0.9], code)
            assert _angle(u[:, 0], vu) < 1e-12
        spread = branch_spread(
            linear_map, [0.4, 0.9],
            [BranchCode((0,) * 10), BranchCode((1,) * 10), BranchCode((0, 1) * 5)],
        )
        assert spread < 1e-12

    def test_spread_needs_two_codes(self, linear_map):
        with pytest.raises(ValueError):
            branch_spread(linear_map, [0.4, 0.9], [BranchCode((0,) * 4)])

    def test_conjugated_integrable(self, conjugated05):
        rep = integrability_verdict(conjugated05, samples=12, codes_per_point=5, seed=3)
        assert rep.integrable
        assert rep.max_spread <= 1e-3
        assert rep.witness is None

    def test_shear_not_integrable_with_witness(self, shear05):
        rep = integrability_verdict(shear05, samples=12, codes_per_point=5, seed=3)
        assert not rep.integrable
        assert rep.max_spread > 1e-2
        w = rep.witness
        assert w is not None
        # the witness pair must reproduce its reported angle
        again = branch_spread(
            shear05, np.array(w["point"]),
            [BranchCode(tuple(int(c) for c in w["code_a"])),
             BranchCode(tuple(int(c) for c in w["code_b"]))],
        )
        assert again == pytest.approx(w["angle"], abs=1e-9)

    def test_product_integrable(self, product05):
        rep = integrability_verdict(product05, samples=8, codes_per_point=4, seed=3)
        assert rep.integrable
        assert rep.max_spread <= 1e-3

    def test_csv_rows(self, shear05):
        rep = integrability_verdict(shear05, samples=3, codes_per_point=3, seed=3)
        rows = rep.csv_rows()
        assert rows[0] == ["point", "code_a", "code_b", "angle"]
        assert len(rows) == 1 + 3 * 3  # 3 points x C(3,2) pairs
