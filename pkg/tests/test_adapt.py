"""Marking strategies, convergence orders, and the adaptive loop."""

import numpy as np
import pytest

from hdgbounds import (Bulk, ErrorDistribution, Uniform, adaptive_loop,
                       builtin, convergence_order, mark)
from hdgbounds.adapt import run_pipeline


class TestMarking:
    def test_bulk_prefix_rule(self):
        gaps = np.array([4.0, 3.0, 2.0, 1.0])
        assert list(mark(gaps, Bulk(0.5))) == [0, 1]  # 4+3 >= 0.5*10

    def test_error_distribution_boundary_case(self):
        g = 0.25
        gaps = np.full(8, g)
        marked = mark(gaps, ErrorDistribution(8 * g))
        assert len(marked) == 8  # >= at the threshold marks everything

    def test_bulk_theta_one_marks_all_nonzero(self):
        gaps = np.array([1.0, 0.0, 2.0, 0.0, 3.0])
        marked = mark(gaps, Bulk(1.0))
        assert list(marked) == [0, 2, 4]

    def test_uniform_marks_all(self):
        assert len(mark(np.ones(5), Uniform())) == 5

    def test_all_zero_gaps_empty(self):
        assert len(mark(np.zeros(4), ErrorDistribution(1.0))) == 0
        assert len(mark(np.zeros(4), Bulk(0.5))) == 0

    def test_bulk_monotone_in_theta(self, rng):
        for _ in range(20):
            gaps = rng.uniform(0, 1, size=rng.integers(2, 30))
            t1, t2 = sorted(rng.uniform(0.05, 1.0, size=2))
            m1 = set(mark(gaps, Bulk(t1)))
            m2 = set(mark(gaps, Bulk(t2)))
            assert m1 <= m2

    def test_bulk_tie_break_by_index(self):
        gaps = np.array([1.0, 2.0, 2.0, 1.0])
        marked = mark(gaps, Bulk(0.5))
        assert list(marked) == [1, 2]

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            Bulk(0.0)
        with pytest.raises(ValueError):
            ErrorDistribution(0.0)
        with pytest.raises(ValueError):
            mark(np.array([-1.0]), Uniform())


class TestConvergenceOrder:
    def test_published_value(self):
        assert abs(convergence_order(5.47e-3, 16, 3.19e-4, 64) - 4.0997) < 1e-3

    def test_equal_errors(self):
        assert convergence_order(1e-3, 16, 1e-3, 64) == 0.0

    def test_power_law(self):
        for n1, n2 in ((10, 40), (16, 256)):
            e1, e2 = n1 ** -2.0, n2 ** -2.0
            assert abs(convergence_order(e1, n1, e2, n2) - 4.0) < 1e-12

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            convergence_order(0.0, 16, 1e-3, 64)
        with pytest.raises(ValueError):
            convergence_order(1e-3, 16, 1e-3, 16)


class TestAdaptiveLoop:
    def test_target_met_immediately(self):
        prob = builtin("example2_s1")
        run = adaptive_loop(prob.initial_mesh(), prob.data, prob.out, p=1,
                            strategy=Bulk(0.5), target_gap=1.0,
                            refiner=prob.refiner)
        assert run.converged and len(run.records) == 1
        assert run.records[0].marked == 0

    def test_example1_p3_uniform_converges_fast(self):
        prob = builtin("example1_s1")
        run = adaptive_loop(prob.initial_mesh(), prob.data, prob.out, p=3,
                            strategy=Uniform(), target_gap=1e-8,
                            refiner="red", optimize=True,
                            uniform_family=prob.uniform_family)
        assert run.converged
        assert run.records[-1].nel <= 256
        # published half gap at the final level
        assert abs(run.records[-1].bounds.half_gap - 6.73e-10) < 0.15 * 6.73e-10

    def test_example2_bulk_trajectory(self):
        prob = builtin("example2_s1")
        run = adaptive_loop(prob.initial_mesh(), prob.data, prob.out, p=2,
                            strategy=Bulk(0.5), target_gap=1e-5,
                            refiner="bisect", optimize=True)
        assert run.converged
        # published trajectory checkpoints (40, 4.58e-04) ... (152, 4.47e-06)
        nels = run.nels
        hgs = run.half_gaps
        assert np.all(np.diff(nels) >= 0)
        for n_ref, h_ref in ((40, 4.58e-04), (152, 4.47e-06)):
            i = int(np.argmin(np.abs(nels - n_ref)))
            assert abs(nels[i] - n_ref) <= 0.25 * n_ref
            assert abs(hgs[i] - h_ref) <= 0.5 * h_ref
        # final mesh count within 1.5x of the published 152
        assert run.records[-1].nel <= 1.5 * 152
        # containment at every iteration
        for rec in run.records:
            assert rec.bounds.contains(prob.exact_s, 1e-12)

    def test_iteration_cap_reported(self):
        prob = builtin("example2_s1")
        run = adaptive_loop(prob.initial_mesh(), prob.data, prob.out, p=1,
                            strategy=Bulk(0.5), target_gap=1e-12,
                            max_iter=3, refiner="bisect")
        assert not run.converged
        assert len(run.records) == 3

    def test_unknown_refiner_rejected(self):
        prob = builtin("example2_s1")
        with pytest.raises(ValueError):
            adaptive_loop(prob.initial_mesh(), prob.data, prob.out, p=1,
                          refiner="pink")


class TestPipeline:
    def test_certificate_check_runs(self):
        prob = builtin("example1_s1")
        res = run_pipeline(prob.initial_mesh(), prob.data, prob.out, p=1,
                           check=True)
        assert res.contains(prob.exact_s)
        assert res.s_h is not None

    def test_zero_order_mode(self):
        prob = builtin("example1_s1")
        r1 = run_pipeline(prob.initial_mesh(), prob.data, prob.out, p=1)
        r2 = run_pipeline(prob.initial_mesh(), prob.data, prob.out, p=1,
                          mode="zero-order")
        # identical for these fluxes (div q~ = P f exactly)
        assert abs(r1.s_minus - r2.s_minus) < 1e-10
        assert abs(r1.s_plus - r2.s_plus) < 1e-10
