import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folqr.freqdom import (
    FrequencyGrid,
    h_matrix,
    loop_transfer,
    objective_j2,
    objective_j3,
    singular_values,
)
from folqr.lqr import design
from folqr.model import PseudoStateSpace, SingularResolventError, preset
from folqr.simulate import PerturbationSpec

GRID = FrequencyGrid.logspace()


def sv_oracle(M):
    ev = np.linalg.eigvalsh(M.conj().T @ M)
    return np.sqrt(np.clip(ev, 0, None))[::-1]


class TestSingularValues:
    def test_identity(self):
        np.testing.assert_allclose(singular_values(np.eye(3)), [1, 1, 1])

    def test_diagonal(self):
        np.testing.assert_allclose(singular_values(np.diag([3.0, -4.0])), [4, 3])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_eigen_oracle_and_adjoint(self, n, m, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))
        sv = singular_values(M)
        np.testing.assert_allclose(sv, sv_oracle(M)[: min(n, m)], atol=1e-10)
        np.testing.assert_allclose(sv, singular_values(M.conj().T), atol=1e-10)


class TestGrid:
    def test_default(self):
        assert len(GRID) == 100
        assert GRID.omegas[0] == pytest.approx(1e-3) and GRID.omegas[-1] == pytest.approx(1e3)

    @pytest.mark.parametrize("w", [[1.0], [2.0, 1.0], [0.0, 1.0]])
    def test_invalid(self, w):
        with pytest.raises(ValueError):
            FrequencyGrid(w)


class TestH:
    def test_zero_q(self):
        ss = preset("example2_eq9")
        assert np.all(h_matrix(ss, np.zeros(6), 0.7) == 0)

    def test_scalar(self):
        ss = PseudoStateSpace([[-1.0]], [[1.0]], [[1.0]], [1.0])
        H = h_matrix(ss, [4.0], 1.0)
        assert abs(H[0, 0] - 2 / (1 + 1j)) < 1e-15
        assert abs(abs(H[0, 0]) - math.sqrt(2)) < 1e-15

    def test_example2_direct_solve(self):
        ss = preset("example2_eq9")
        w = 0.32
        lam = np.diag((1j * w) ** ss.orders)
        ref = np.linalg.solve(lam - ss.A, ss.B)
        np.testing.assert_allclose(h_matrix(ss, np.ones(6), w), ref, rtol=1e-12)


class TestJ2:
    def test_zero_q(self):
        ss = preset("example1_eq7")
        assert objective_j2(ss, np.zeros(3), 0.3, GRID) == pytest.approx(100)

    def test_single_term(self):
        # |H(j)|^2 = q / 2, so q = 6 gives ||H|| = sqrt(3) and a term of 2 at w = 1
        ss = PseudoStateSpace([[-1.0]], [[1.0]], [[1.0]], [1.0])
        grid = FrequencyGrid([1.0, 2.0])
        first = objective_j2(ss, [6.0], 1.0, grid) - math.sqrt(1 + 6.0 / 5)
        assert first == pytest.approx(2.0)

    def test_tabled_weights_raise_j2(self):
        ss = preset("example1_eq7")
        assert objective_j2(ss, [0.5, 0.0001, 227.405], 0.001, GRID) > objective_j2(ss, np.ones(3), 1.0, GRID)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-4, 3), min_size=7, max_size=7), st.sampled_from(["fractional", "literal"]))
    def test_lower_bound(self, genes, mode):
        ss = preset("example2_eq9")
        q = 10.0 ** np.array(genes[:6])
        assert objective_j2(ss, q, 10.0 ** genes[6], GRID, mode) >= len(GRID)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-3, 2), min_size=4, max_size=4), st.floats(0.0, 2.0), st.integers(0, 2))
    def test_monotone(self, genes, bump, idx):
        ss = preset("example1_eq7")
        q = 10.0 ** np.array(genes[:3])
        r = 10.0 ** genes[3]
        base = objective_j2(ss, q, r, GRID)
        q2 = q.copy()
        q2[idx] *= 10.0 ** bump
        assert objective_j2(ss, q2, r, GRID) >= base * (1 - 1e-12)
        assert objective_j2(ss, q, r * 10.0 ** bump, GRID) <= base * (1 + 1e-12)

    def test_mimo_pairing(self):
        ss = PseudoStateSpace(-np.eye(2), np.eye(2), np.eye(2), [1.0, 1.0])
        grid = FrequencyGrid([1.0, 2.0])
        got = objective_j2(ss, [1.0, 4.0], [1.0, 4.0], grid, "literal")
        ref = 0.0
        for w in grid.omegas:
            H = np.diag([1.0, 2.0]) / (1j * w + 1)
            sv = np.sort(sv_oracle(H))
            ref += np.sum(np.sqrt(1 / 4 + sv ** 2 / 4))
        assert got == pytest.approx(ref, rel=1e-12)


class TestLoop:
    def test_zero_gain(self):
        assert loop_transfer(preset("example2_eq9"), np.zeros(6), 1.0) == 0

    def test_integrator(self):
        ss = PseudoStateSpace([[0.0]], [[1.0]], [[1.0]], [1.0])
        assert abs(loop_transfer(ss, [1.0], 1.0) - (-1j)) < 1e-15

    def test_double_integrator(self):
        ss = PseudoStateSpace([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0]], [1.0, 1.0])
        L = loop_transfer(ss, [1.0, math.sqrt(3)], 1.0)
        assert abs(L - (-1 - math.sqrt(3) * 1j)) < 1e-14

    def test_singular(self):
        ss = PseudoStateSpace([[0.0]], [[1.0]], [[1.0]], [1.0])
        with pytest.raises(SingularResolventError):
            loop_transfer(ss, [1.0], 0.0)


class TestJ3:
    def test_unity_loop(self):
        spec = PerturbationSpec("external_tf", "(s + 1)/(s + 1)")
        assert objective_j3(None, None, GRID, spec) == pytest.approx(0.0, abs=1e-12)

    def test_half_loop(self):
        spec = PerturbationSpec("external_tf", "(s + 2)/(2*s + 4)")
        grid = FrequencyGrid.logspace(points=50)
        assert objective_j3(None, None, grid, spec) == pytest.approx(50.0)

    def test_minus_j(self):
        ss = PseudoStateSpace([[0.0]], [[1.0]], [[1.0]], [1.0])
        grid = FrequencyGrid([1.0, 2.0])
        total = objective_j3(ss, [1.0], grid)
        # L(j) = -j and L(2j) = -0.5j
        assert total == pytest.approx(math.sqrt(2) + abs(1 + 0.5j) / 0.5)

    def test_zero_loop_penalty(self):
        ss = preset("example1_eq7")
        assert objective_j3(ss, np.zeros(3), FrequencyGrid.logspace(points=10)) == pytest.approx(1e7)

    @pytest.mark.parametrize("mode", ["fractional", "literal"])
    def test_similarity_invariance(self, mode):
        rng = np.random.default_rng(11)
        ss = preset("example2_eq9")
        sol = design(ss, [1.004, 1.0007, 0.03, 3.5, 5.898, 4.25], 0.002)
        T = np.eye(6) + 0.3 * rng.normal(size=(6, 6))
        # all six orders equal 0.32, so diag((jw)^n) commutes with any T
        moved = ss.transformed(T)
        k_moved = sol.k @ np.linalg.inv(T)
        a = objective_j3(ss, sol.k, GRID, mode=mode)
        b = objective_j3(moved, k_moved, GRID, mode=mode)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))
