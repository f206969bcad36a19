import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kkt_tracker.exceptions import DomainError, PreconditionError
from kkt_tracker.tuner import TunerProblem, b_of_eps, golden_section, tune, unimodality_audit


def example():
    # synthetic trajectory speed: primal speed 1, multiplier speed 0.5
    return TunerProblem(delta=0.5, beta=10.0, Lambda_m=1.0, M_nc=0.5, M_lambda=0.2,
                        sigma_of_eta=lambda eta: math.sqrt(1.0 + 0.25 / eta))


def test_eps_lower_and_blowup():
    tp = example()
    assert tp.eps_lower == pytest.approx((0.5 * 0.5 / 4) ** 2)
    with pytest.raises(DomainError):
        b_of_eps(tp, tp.eps_lower)
    assert b_of_eps(tp, tp.eps_lower * (1 + 1e-9)) > 1e6 * b_of_eps(tp, 2 * tp.eps_lower)


def test_zero_Mnc_is_increasing_closed_form():
    tp = TunerProblem(0.5, 2.0, 1.5, 0.0, 0.3, lambda eta: 0.8)
    es = np.geomspace(1e-4, 10, 50)
    vals = [b_of_eps(tp, e) for e in es]
    assert np.all(np.diff(vals) > 0)
    assert vals[7] == pytest.approx((0.8 / 2.0 + math.sqrt(es[7] * 1.5) * 0.3) / 1.5)


def test_nonpositive_lambda_rejected():
    with pytest.raises(PreconditionError):
        TunerProblem(0.5, 1.0, 0.0, 1.0, 1.0, lambda e: 1.0)


def test_golden_section_quadratic():
    x = golden_section(lambda v: (v - 0.3) ** 2, 0.0, 1.0, 1e-10)
    assert abs(x - 0.3) <= 1e-9


@given(st.floats(0.2, 3.0), st.floats(0.05, 2.0), st.floats(0.01, 1.0), st.floats(0.05, 1.0))
@settings(max_examples=15)
def test_tune_matches_dense_grid(lam, mnc, ml, delta):
    tp = TunerProblem(delta, 5.0, lam, mnc, ml, lambda eta: math.sqrt(0.5 + 0.1 / eta))
    res = tune(tp)
    assert res.eta_star * res.eps_star == lam
    lo = tp.eps_lower
    grid = np.linspace(lo, max(100 * lo, 2 * res.eps_star), 100_001)[1:]
    vals = np.array([b_of_eps(tp, e) for e in grid])
    j = int(np.argmin(vals))
    assert abs(res.eps_star - grid[j]) <= grid[1] - grid[0]
    # golden section resolves below the grid, so it is never worse than the grid minimum
    assert res.bound <= vals[j] + 1e-12


def test_denominator_edge_for_non_unit_lambda():
    tp = TunerProblem(1.0, 5.0, 2.0, 1.0, 1.0, lambda eta: 1.0)
    edge = 2.0 * (1.0 / 8.0) ** 2
    assert tp.eps_lower == pytest.approx(edge)
    assert b_of_eps(tp, edge * (1 + 1e-9)) > 1e6 * b_of_eps(tp, 2 * edge)


def test_degenerate_flag():
    tp = TunerProblem(0.5, 10.0, 1.0, 0.5, 0.0, lambda eta: 1.0)
    res = tune(tp)
    assert res.degenerate
    assert res.eta_star * res.eps_star == 1.0


def test_unimodality_audit():
    tp = example()
    out = unimodality_audit(tp, tp.eps_lower, 100 * tp.eps_lower)
    assert out["unimodal"] and out["sign_changes"] == 1


def test_result_dict():
    d = tune(example()).as_dict()
    assert set(d) >= {"eps_star", "eta_star", "bound", "degenerate", "feasible", "margin", "unimodal"}
