import itertools
import math

import numpy as np
import pytest
from scipy.special import gammaln

from pograd.decode_eval import (INFEASIBLE_FLOOR, ClosureProbabilities,
                                MetricsReport, closure_prf,
                                closure_probabilities, decode_closure, ip_cov,
                                mae_to_reference, pointwise_logliks, step_nll,
                                trace_nll, waic, waic_from_loglik_matrix)
from pograd.hardlik import Trace
from pograd.model import ModelParams, prior_cholesky
from pograd.poset import PartialOrder, transitive_closure
from pograd.samplers import DrawSet


def params_for_embedding(u, rho=0.5, beta=1.0, gamma=1.0):
    """ModelParams whose embedding reproduces the given utility rows."""
    u = np.asarray(u, dtype=float)
    l = prior_cholesky(rho, u.shape[1])
    z = np.linalg.solve(l, u.T).T
    return ModelParams(z=z, rho=rho, beta=beta, gamma=gamma)


def drawset(us, **kw):
    return DrawSet(draws=[(params_for_embedding(u, **kw), 0.0) for u in us],
                   meta={})


def chain_blocks_closure(n, blocks):
    """Closure of disjoint chains given as (start, length) index blocks."""
    mat = np.zeros((n, n), dtype=bool)
    for start, length in blocks:
        for i in range(length):
            mat[start + i, start + i + 1:start + length] = True
    return PartialOrder(mat, is_closure=True)


class TestClosureProbabilities:
    def test_single_draw_is_indicator(self):
        u = np.array([[2.0, 2.0], [1.0, 1.0], [0.0, 0.0]])
        cp = closure_probabilities(drawset([u]))
        want = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]], dtype=float)
        assert np.array_equal(cp.p_hat, want)

    def test_two_draws_average(self):
        u_a = np.array([[1.0, 1.0], [0.0, 0.0], [5.0, -5.0]])   # only 0 -> 1
        u_b = np.array([[1.0, -1.0], [0.0, 0.0], [1.0, 1.0]])   # only 2 -> 1
        cp = closure_probabilities(drawset([u_a, u_b]))
        want = np.zeros((3, 3))
        want[0, 1] = 0.5
        want[2, 1] = 0.5
        assert np.array_equal(cp.p_hat, want)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            closure_probabilities(DrawSet(draws=[], meta={}))

    def test_validation(self):
        with pytest.raises(ValueError):
            ClosureProbabilities(np.array([[0.0, 1.5], [0.0, 0.0]]))
        with pytest.raises(ValueError):
            ClosureProbabilities(np.array([[0.5, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValueError):
            ClosureProbabilities(np.zeros((2, 3)))


class TestDecodeClosure:
    def test_unanimous_draws_decode_exactly(self):
        u = np.array([[3.0, 3.0], [1.0, 2.0], [2.0, 1.0], [0.0, 0.0]])
        cp = closure_probabilities(drawset([u, u, u]))
        got = decode_closure(cp, zeta=0.5)
        want = closure_probabilities(drawset([u])).p_hat.astype(bool)
        assert np.array_equal(got.precedes, want)

    def test_mutual_edges_keep_heavier_direction(self):
        p = np.zeros((2, 2))
        p[0, 1], p[1, 0] = 0.6, 0.55
        got = decode_closure(ClosureProbabilities(p), zeta=0.5)
        assert got.precedes[0, 1] and not got.precedes[1, 0]

    def test_all_below_threshold_gives_empty_order(self):
        p = np.full((3, 3), 0.3)
        np.fill_diagonal(p, 0.0)
        got = decode_closure(ClosureProbabilities(p), zeta=0.5)
        assert not got.precedes.any()

    def test_zeta_threshold_strict(self):
        p = np.zeros((2, 2))
        p[0, 1] = 0.5
        got = decode_closure(ClosureProbabilities(p), zeta=0.5)
        assert not got.precedes.any()
        got = decode_closure(ClosureProbabilities(p), zeta=0.49)
        assert got.precedes[0, 1]

    def test_zeta_range(self):
        cp = ClosureProbabilities(np.zeros((2, 2)))
        for zeta in (0.0, 1.0, -0.2):
            with pytest.raises(ValueError):
                decode_closure(cp, zeta=zeta)

    def test_random_matrices_always_decode_to_closures(self):
        rng = np.random.default_rng(90)
        for _ in range(100):
            n = int(rng.integers(2, 8))
            p = rng.uniform(0, 1, size=(n, n))
            np.fill_diagonal(p, 0.0)
            got = decode_closure(ClosureProbabilities(p),
                                 zeta=float(rng.uniform(0.05, 0.95)))
            # the PartialOrder constructor re-validates transitivity
            assert PartialOrder(got.precedes, is_closure=True)


class TestClosurePrf:
    def test_perfect_recovery(self, diamond):
        assert closure_prf(diamond, diamond) == (1.0, 1.0, 1.0)

    def test_empty_conventions(self):
        empty = PartialOrder(np.zeros((3, 3), dtype=bool), is_closure=True)
        chain = chain_blocks_closure(3, [(0, 3)])
        assert closure_prf(empty, empty) == (1.0, 1.0, 1.0)
        assert closure_prf(empty, chain) == (1.0, 0.0, 0.0)
        assert closure_prf(chain, empty) == (0.0, 1.0, 0.0)

    def test_large_chain_construction_exact_counts(self):
        # truth: chains of 85/10/9/7/6/4/3/2 items -> 3697 closure edges;
        # estimate: the 83-item prefix of the long chain plus the full
        # 10- and 9-chains (3484 true edges) plus fresh chains of 10/5/3
        # items (58 spurious edges); 144 items total
        truth_lengths = [85, 10, 9, 7, 6, 4, 3, 2]
        starts = np.cumsum([0] + truth_lengths)
        n = 144
        truth = chain_blocks_closure(
            n, [(s, ln) for s, ln in zip(starts, truth_lengths)])
        est_blocks = [(0, 83), (starts[1], 10), (starts[2], 9),
                      (126, 10), (136, 5), (141, 3)]
        est = chain_blocks_closure(n, est_blocks)
        assert truth.precedes.sum() == 3697
        assert est.precedes.sum() == 3484 + 58
        precision, recall, f1 = closure_prf(est, truth)
        assert precision == pytest.approx(3484 / 3542)
        assert recall == pytest.approx(3484 / 3697)
        assert f1 == pytest.approx(2 * precision * recall / (precision + recall))
        assert (round(precision, 3), round(recall, 3), round(f1, 3)) == \
            (0.984, 0.942, 0.963)

    def test_universe_mismatch(self, diamond):
        other = PartialOrder(np.zeros((3, 3), dtype=bool), is_closure=True)
        with pytest.raises(ValueError):
            closure_prf(other, diamond)


class TestMae:
    def test_hand_value(self):
        a = ClosureProbabilities(np.array([[0.0, 0.8], [0.2, 0.0]]))
        b = ClosureProbabilities(np.array([[0.0, 0.5], [0.0, 0.0]]))
        assert mae_to_reference(a, b) == pytest.approx((0.3 + 0.2) / 2)

    def test_metric_properties(self):
        rng = np.random.default_rng(91)
        mats = []
        for _ in range(3):
            p = rng.uniform(0, 1, size=(4, 4))
            np.fill_diagonal(p, 0.0)
            mats.append(ClosureProbabilities(p))
        a, b, c = mats
        assert mae_to_reference(a, a) == 0.0
        assert mae_to_reference(a, b) == mae_to_reference(b, a)
        assert (mae_to_reference(a, c)
                <= mae_to_reference(a, b) + mae_to_reference(b, c) + 1e-12)

    def test_size_checks(self):
        a = ClosureProbabilities(np.zeros((2, 2)))
        b = ClosureProbabilities(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            mae_to_reference(a, b)
        with pytest.raises(ValueError):
            mae_to_reference(ClosureProbabilities(np.zeros((1, 1))),
                             ClosureProbabilities(np.zeros((1, 1))))


class TestTraceNll:
    def test_draw_average_sits_inside_the_log(self):
        # d = 1 with logit-9 separation: the trace has probability 0.1 under
        # one draw and 0.9 under the other, so the predictive mean is 0.5
        ln9 = math.log(9.0)
        ds = drawset([np.array([[0.0], [ln9]]), np.array([[ln9], [0.0]])],
                     beta=0.0, gamma=1.0)
        tr = Trace(choice_set=[0, 1], order=[0, 1])
        got = trace_nll(ds, [tr], evaluator="relaxed", tau=0.3)
        assert got == pytest.approx(-math.log(0.5), abs=1e-9)

    def test_uniform_predictive_is_log_factorial(self):
        m = 100
        ds = drawset([np.zeros((m, 2))], beta=0.0)
        tr = Trace(choice_set=range(m), order=list(range(m)))
        got = trace_nll(ds, [tr], evaluator="hard")
        assert got == pytest.approx(float(gammaln(m + 1)), rel=1e-12)

    def test_single_draw_single_trace(self):
        u = np.array([[2.0, 2.0], [1.0, 1.0], [0.0, 0.0]])
        ds = drawset([u], beta=0.0)
        tr = Trace(choice_set=range(3), order=[0, 1, 2])
        assert trace_nll(ds, [tr], evaluator="hard") == pytest.approx(0.0)

    def test_infeasible_trace_hits_floor_with_warning(self):
        u = np.array([[2.0, 2.0], [1.0, 1.0], [0.0, 0.0]])
        ds = drawset([u], beta=0.0)
        bad = Trace(choice_set=range(3), order=[2, 1, 0])
        with pytest.warns(UserWarning, match="infeasible"):
            got = trace_nll(ds, [bad], evaluator="hard")
        assert got == -INFEASIBLE_FLOOR

    def test_relaxed_requires_tau(self):
        ds = drawset([np.zeros((2, 2))])
        tr = Trace(choice_set=[0, 1], order=[0, 1])
        with pytest.raises(ValueError, match="tau"):
            trace_nll(ds, [tr], evaluator="relaxed")
        with pytest.raises(ValueError, match="evaluator"):
            trace_nll(ds, [tr], evaluator="exact")


class TestStepNll:
    def test_uniform_predictive_per_step_constant(self):
        m = 100
        ds = drawset([np.zeros((m, 2))], beta=0.0)
        tr = Trace(choice_set=range(m), order=list(range(m)))
        got = step_nll(ds, [tr], evaluator="hard")
        assert got == pytest.approx(float(gammaln(m + 1)) / m, rel=1e-12)

    def test_single_item_trace_scores_zero(self):
        ds = drawset([np.zeros((3, 2))], beta=0.0)
        tr = Trace(choice_set=[1], order=[1])
        assert step_nll(ds, [tr], evaluator="hard") == 0.0

    def test_single_draw_equals_trace_nll_per_step(self):
        rng = np.random.default_rng(92)
        u = rng.standard_normal((5, 2))
        ds = drawset([u], beta=0.7, gamma=2.0)
        tr = Trace(choice_set=range(5), order=list(rng.permutation(5)))
        s = step_nll(ds, [tr], evaluator="relaxed", tau=0.3)
        t = trace_nll(ds, [tr], evaluator="relaxed", tau=0.3)
        assert s == pytest.approx(t / len(tr), abs=1e-12)


class TestWaic:
    def test_hand_matrix(self):
        ll = np.array([[-1.0, -2.0], [-1.0, -1.0]])
        w, lppd, p_waic = waic_from_loglik_matrix(ll)
        want_lppd = math.log((math.exp(-1) + math.exp(-2)) / 2) - 1.0
        assert lppd == pytest.approx(want_lppd)
        assert p_waic == pytest.approx(0.5)  # ddof=1 variance of (-1, -2)
        assert w == pytest.approx(-2 * (want_lppd - 0.5))

    def test_single_draw_no_penalty(self):
        ll = np.array([[-1.5], [-0.5]])
        w, lppd, p_waic = waic_from_loglik_matrix(ll)
        assert p_waic == 0.0
        assert lppd == pytest.approx(-2.0)
        assert w == pytest.approx(4.0)

    def test_identical_draws_no_penalty(self):
        u = np.array([[2.0, 2.0], [1.0, 1.0]])
        ds = drawset([u, u, u], beta=0.5)
        tr = Trace(choice_set=[0, 1], order=[0, 1])
        w, lppd, p_waic = waic(ds, [tr], evaluator="hard")
        assert p_waic == 0.0
        assert w == pytest.approx(-2 * lppd)

    def test_matches_pointwise_matrix_route(self):
        rng = np.random.default_rng(93)
        us = [rng.standard_normal((4, 2)) for _ in range(3)]
        ds = drawset(us, beta=0.6, gamma=1.5)
        traces = [Trace(choice_set=range(4), order=list(rng.permutation(4)))
                  for _ in range(3)]
        direct = waic(ds, traces, evaluator="relaxed", tau=0.3)
        ll = pointwise_logliks(ds, traces, "relaxed", 0.3)
        assert ll.shape == (3, 3)
        assert direct == pytest.approx(waic_from_loglik_matrix(ll))


class TestIpCov:
    def test_diamond_needs_both_orders(self, diamond):
        both = [Trace(choice_set=range(4), order=[0, 1, 2, 3]),
                Trace(choice_set=range(4), order=[0, 2, 1, 3])]
        assert ip_cov(both, diamond) == 1.0
        assert ip_cov(both[:1], diamond) == 0.0

    def test_total_order_truth_is_trivially_covered(self):
        chain = chain_blocks_closure(3, [(0, 3)])
        assert ip_cov([], chain) == 1.0

    def test_partial_coverage_fraction(self):
        # truth: single edge 0 -> 1 among 4 items; incomparable pairs are
        # (0,2), (0,3), (1,2), (1,3), (2,3)
        mat = np.zeros((4, 4), dtype=bool)
        mat[0, 1] = True
        truth = PartialOrder(mat, is_closure=True)
        traces = [Trace(choice_set=[2, 3], order=[2, 3]),
                  Trace(choice_set=[2, 3], order=[3, 2])]
        assert ip_cov(traces, truth) == pytest.approx(1 / 5)

    def test_monotone_in_traces(self):
        rng = np.random.default_rng(94)
        mat = np.zeros((5, 5), dtype=bool)
        mat[0, 1] = True
        truth = PartialOrder(transitive_closure(mat), is_closure=True)
        traces = []
        prev = 0.0
        for _ in range(30):
            size = int(rng.integers(2, 6))
            items = rng.choice(5, size=size, replace=False)
            traces.append(Trace(choice_set=items,
                                order=list(rng.permutation(items))))
            cur = ip_cov(traces, truth)
            assert cur >= prev
            prev = cur
        assert prev == 1.0


class TestMetricsReport:
    def test_to_dict_covers_csv_fields(self):
        rep = MetricsReport(precision=0.5, extra={"note": 1})
        d = rep.to_dict()
        for k in MetricsReport.CSV_FIELDS:
            assert k in d
        assert d["precision"] == 0.5
        assert d["recall"] is None
        assert d["note"] == 1
