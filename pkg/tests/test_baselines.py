import math

import numpy as np
import pytest
from scipy.linalg import expm

from pograd.baselines import (SoftDagConfig, _adam_minimize, _step_nll_point,
                              majority_fit, notears_penalty,
                              softdag_loss_and_grad, softdag_reachability,
                              softdag_fit)
from pograd.dataio import Dataset
from pograd.decode_eval import closure_prf
from pograd.hardlik import Trace
from pograd.poset import PartialOrder

from conftest import rel_err


def mkdata(n, train_orders, test_orders=()):
    traces = [Trace(choice_set=sorted(o), order=list(o))
              for o in list(train_orders) + list(test_orders)]
    splits = ["train"] * len(train_orders) + ["test"] * len(test_orders)
    return Dataset(items=[str(i) for i in range(n)], traces=traces,
                   splits=splits)


DIAMOND_ORDERS = [[0, 1, 2, 3], [0, 2, 1, 3]] * 4


def diamond_closure():
    mat = np.zeros((4, 4), dtype=bool)
    mat[0, 1] = mat[0, 2] = mat[0, 3] = mat[1, 3] = mat[2, 3] = True
    return PartialOrder(mat, is_closure=True)


class TestMajority:
    def test_single_trace_gives_chain(self):
        got = majority_fit(mkdata(3, [[0, 1, 2]]))
        want = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]], dtype=bool)
        assert np.array_equal(got.precedes, want)

    def test_split_vote_gives_no_edge(self):
        got = majority_fit(mkdata(2, [[0, 1], [1, 0]]))
        assert not got.precedes.any()

    def test_unobserved_pairs_skipped(self):
        got = majority_fit(mkdata(4, [[0, 1], [2, 3]]))
        assert got.precedes[0, 1] and got.precedes[2, 3]
        assert not got.precedes[0, 2] and not got.precedes[1, 3]

    def test_condorcet_cycle_broken_at_lightest_edge(self):
        orders = ([[0, 1]] * 3 + [[1, 0]]          # 0 -> 1 at 0.75
                  + [[1, 2]] * 3 + [[2, 1]]        # 1 -> 2 at 0.75
                  + [[2, 0]] * 2 + [[0, 2]])       # 2 -> 0 at 2/3 (lightest)
        got = majority_fit(mkdata(3, orders))
        want = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]], dtype=bool)
        assert np.array_equal(got.precedes, want)

    def test_threshold_moves_the_bar(self):
        orders = [[0, 1]] * 3 + [[1, 0]] * 2   # before-fraction 0.6
        assert majority_fit(mkdata(2, orders), theta_maj=0.5).precedes[0, 1]
        assert not majority_fit(mkdata(2, orders), theta_maj=0.7).precedes.any()

    def test_ignores_test_split(self):
        with_test = mkdata(2, [[0, 1]] * 3, test_orders=[[1, 0]] * 5)
        without = mkdata(2, [[0, 1]] * 3)
        assert np.array_equal(majority_fit(with_test).precedes,
                              majority_fit(without).precedes)

    def test_result_is_valid_closure(self):
        rng = np.random.default_rng(110)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            orders = [list(rng.permutation(rng.choice(n, size=int(rng.integers(2, n + 1)), replace=False)))
                      for _ in range(6)]
            got = majority_fit(mkdata(n, orders))
            assert PartialOrder(got.precedes, is_closure=True)


class TestReachability:
    def test_zero_weights(self):
        assert np.array_equal(softdag_reachability(np.zeros((3, 3)), 3),
                              np.zeros((3, 3)))

    def test_single_edge(self):
        w = np.zeros((2, 2))
        w[0, 1] = 0.7
        r = softdag_reachability(w, 2)
        assert r[0, 1] == pytest.approx(1 - math.exp(-0.7))
        assert r[1, 0] == 0.0

    def test_two_hop_accumulates(self):
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 2] = 1.0
        r2 = softdag_reachability(w, 2)
        assert r2[0, 2] == pytest.approx(1 - math.exp(-1.0))
        r1 = softdag_reachability(w, 1)
        assert r1[0, 2] == 0.0

    def test_diagonal_zeroed(self):
        w = np.full((3, 3), 0.5)
        r = softdag_reachability(w, 4)
        assert (r.diagonal() == 0).all()

    def test_k_hops_validated(self):
        with pytest.raises(ValueError):
            softdag_reachability(np.zeros((2, 2)), 0)


class TestNotears:
    def test_zero_matrix(self):
        assert notears_penalty(np.zeros((4, 4)), 12) == 0.0

    def test_acyclic_exactly_zero(self):
        rng = np.random.default_rng(111)
        w = np.triu(rng.uniform(0, 1, size=(5, 5)), k=1)
        # nilpotent B: every power trace vanishes at any truncation
        assert notears_penalty(w, 6) == 0.0

    def test_two_cycle_closed_form(self):
        for a in (0.3, 0.8):
            w = np.zeros((2, 2))
            w[0, 1] = w[1, 0] = a
            want = 2 * math.cosh(a * a) - 2
            assert notears_penalty(w, 30) == pytest.approx(want, rel=1e-12)

    def test_matches_matrix_exponential(self):
        rng = np.random.default_rng(112)
        for _ in range(20):
            w = rng.uniform(0, 1, size=(4, 4))
            np.fill_diagonal(w, 0.0)
            want = float(np.trace(expm(w * w)) - 4)
            assert notears_penalty(w, 25) == pytest.approx(want, abs=1e-10)

    def test_positive_on_cycles(self):
        w = np.zeros((3, 3))
        w[0, 1] = w[1, 2] = w[2, 0] = 0.5
        assert notears_penalty(w, 12) > 0.0


class TestLossAndGrad:
    def test_gradients_vs_finite_differences(self):
        rng = np.random.default_rng(113)
        n = 4
        h = 1e-6
        for _ in range(5):
            a = rng.normal(-1.0, 0.5, size=(n, n))
            np.fill_diagonal(a, 0.0)
            eta_beta = float(rng.normal(0, 0.5))
            orders = [list(rng.permutation(n)) for _ in range(3)]
            args = (orders, 1e-3, 5.0, 3, 12)
            _, d_a, d_b = softdag_loss_and_grad(a, eta_beta, *args)
            fd = np.zeros((n, n))
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    up, dn = a.copy(), a.copy()
                    up[i, j] += h
                    dn[i, j] -= h
                    fd[i, j] = (softdag_loss_and_grad(up, eta_beta, *args)[0]
                                - softdag_loss_and_grad(dn, eta_beta, *args)[0]) / (2 * h)
            assert rel_err(d_a, fd) <= 1e-4
            fd_b = (softdag_loss_and_grad(a, eta_beta + h, *args)[0]
                    - softdag_loss_and_grad(a, eta_beta - h, *args)[0]) / (2 * h)
            assert rel_err(d_b, fd_b) <= 1e-4
            assert (d_a.diagonal() == 0).all()

    def test_l1_term_enters_loss(self):
        rng = np.random.default_rng(114)
        a = rng.normal(-1.0, 0.3, size=(3, 3))
        np.fill_diagonal(a, 0.0)
        orders = [[0, 1, 2]]
        lo, _, _ = softdag_loss_and_grad(a, 0.0, orders, 0.0, 1.0, 2, 12)
        hi, _, _ = softdag_loss_and_grad(a, 0.0, orders, 10.0, 1.0, 2, 12)
        from scipy.special import expit
        w = expit(a)
        np.fill_diagonal(w, 0.0)
        assert hi - lo == pytest.approx(10.0 * w.sum())


class TestStepNllPoint:
    def test_uniform_matrix_gives_log_factorial_rate(self):
        m = 5
        for beta in (0.0, 1.7):
            got = _step_nll_point(np.zeros((m, m)), [list(range(m))], beta)
            assert got == pytest.approx(math.log(math.factorial(m)) / m)

    def test_averages_over_all_steps(self):
        got = _step_nll_point(np.zeros((3, 3)), [[0, 1, 2], [2, 1]], 0.0)
        want = -(math.log(1 / 3) + math.log(1 / 2) + 0.0
                 + math.log(1 / 2) + 0.0) / 5
        assert got == pytest.approx(want)


class TestSoftDagConfig:
    def test_resolved_defaults(self):
        cfg = SoftDagConfig()
        assert cfg.resolved_k(10) == 8
        assert cfg.resolved_k(5) == 4
        assert cfg.resolved_degree(10) == 12
        assert SoftDagConfig(k_hops=3).resolved_degree(10) == 12
        assert SoftDagConfig(taylor_degree=20).resolved_degree(10) == 20

    def test_validation(self):
        with pytest.raises(ValueError):
            SoftDagConfig(lambda_l1=-1.0)
        with pytest.raises(ValueError):
            SoftDagConfig(steps=0)
        with pytest.raises(ValueError):
            SoftDagConfig(adam_lr=0.0)
        with pytest.raises(ValueError):
            SoftDagConfig(theta_dag=1.0)


class TestSoftDagFit:
    CFG = SoftDagConfig(lambda_l1=1e-3, lambda_h=10.0, steps=300, restarts=2,
                        seed=0)

    def test_recovers_diamond(self):
        ds = mkdata(4, DIAMOND_ORDERS)
        decoded, w, score = softdag_fit(ds, self.CFG)
        _, _, f1 = closure_prf(decoded, diamond_closure())
        assert f1 >= 0.8
        assert np.isfinite(score)
        assert w.shape == (4, 4)

    def test_deterministic(self):
        ds = mkdata(4, DIAMOND_ORDERS)
        a = softdag_fit(ds, self.CFG)
        b = softdag_fit(ds, self.CFG)
        assert np.array_equal(a[0].precedes, b[0].precedes)
        assert np.array_equal(a[1], b[1])
        assert a[2] == b[2]

    def test_grid_search_path(self):
        ds = mkdata(4, DIAMOND_ORDERS)
        cfg = SoftDagConfig(steps=60, restarts=1, seed=0)  # 3x3 grid
        decoded, _, score = softdag_fit(ds, cfg)
        assert np.isfinite(score)
        assert PartialOrder(decoded.precedes, is_closure=True)

    def test_ignores_test_split(self):
        plain = mkdata(4, DIAMOND_ORDERS)
        noisy = mkdata(4, DIAMOND_ORDERS, test_orders=[[3, 2, 1, 0]] * 4)
        a = softdag_fit(plain, self.CFG)
        b = softdag_fit(noisy, self.CFG)
        assert np.array_equal(a[0].precedes, b[0].precedes)

    def test_needs_two_traces(self):
        with pytest.raises(ValueError, match="at least 2"):
            softdag_fit(mkdata(3, [[0, 1, 2]]), self.CFG)

    def test_split_range_validated(self):
        ds = mkdata(4, DIAMOND_ORDERS)
        with pytest.raises(ValueError):
            softdag_fit(ds, self.CFG, validation_split=0.0)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_all_restarts_failing_raises(self):
        ds = mkdata(4, DIAMOND_ORDERS)
        cfg = SoftDagConfig(lambda_l1=1e-3, lambda_h=float("inf"), steps=5,
                            restarts=1)
        with pytest.raises(FloatingPointError, match="restart"):
            softdag_fit(ds, cfg)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_minimizer_rejects_nonfinite_start(self):
        orders = [np.array([0, 1, 2])]
        a = np.zeros((3, 3))
        with pytest.raises(FloatingPointError):
            _adam_minimize(a, 800.0, orders, 1e-3, 1.0, 2, 12,
                           SoftDagConfig(steps=3))
