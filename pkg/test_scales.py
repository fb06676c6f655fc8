from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from multihom.errors import DimensionError, PreconditionError, ScaleOrderError
from multihom.kinds import ScaleLimit
from multihom.quasicell import GOLDEN
from multihom.scales import (
    ScaleSequence, classify, estimate_limit, rational_limit, rearrange, reduce_two_scale,
    rewriting_residual,
)

K = 2.0 ** np.arange(1, 25)


def test_powers_are_well_separated():
    seq = ScaleSequence.from_family(["eps", "eps**2", "eps**3"])
    result = classify(seq)
    assert result.limits == (ScaleLimit.VANISHING,) * 3
    assert result.separated
    assert result.well_separated
    assert result.exponents[0] == 2
    assert all(n is not None for n in result.exponents)


def test_logarithmic_gap_is_separated_but_not_well_separated():
    seq = ScaleSequence.from_family(["eps", "eps/(ln(k) + 1)"])
    result = classify(seq)
    assert result.separated
    assert not result.well_separated


def test_proportional_scales_are_not_separated():
    seq = ScaleSequence.from_family(["eps", "1/(2*k)"])
    result = classify(seq)
    assert not result.separated
    assert result.ratio_classes == (ScaleLimit.FINITE,)
    assert result.ratio_limits[0] == pytest.approx(0.5)


def test_ordering_violation_names_row_and_index():
    with pytest.raises(ScaleOrderError) as info:
        ScaleSequence.from_rows([[0.5, 0.25], [0.1, 0.2]])
    assert (info.value.row, info.value.index) == (1, 1)


def test_tail_window_longer_than_sequence():
    seq = ScaleSequence.from_rows([[0.5, 0.25], [0.25, 0.125]])
    with pytest.raises(PreconditionError):
        classify(seq, tail_window=8)


def test_bad_formula():
    with pytest.raises(DimensionError):
        ScaleSequence.from_family(["eps", "1/(2*q)"])


def test_sequence_from_csv(tmp_path):
    path = tmp_path / "scales.csv"
    rows = [(1.0 / k, 1.0 / (2 * k + 1)) for k in K]
    path.write_text("# eps_1, eps_2\n" + "\n".join(f"{a!r},{b!r}" for a, b in rows) + "\n")
    seq = ScaleSequence.from_csv(path)
    assert len(seq) == len(K)
    assert seq.num_scales == 2
    assert np.allclose(seq.entries, rows, rtol=0, atol=0)


def test_estimate_limit_of_constant_sequence():
    cls, value = estimate_limit(np.full(10, 0.25))
    assert cls is ScaleLimit.FINITE
    assert value == 0.25


def test_estimate_limit_of_oscillating_sequence():
    cls, value = estimate_limit(np.array([1.0, 2.0] * 5))
    assert cls is ScaleLimit.INCONCLUSIVE
    assert np.isnan(value)


def test_rational_limit():
    assert rational_limit(0.5) == Fraction(1, 2)
    assert rational_limit(2.0 / 3.0) == Fraction(2, 3)
    assert rational_limit(GOLDEN) is None


def test_two_scale_rewrite_gives_fixed_unit_scale():
    seq = ScaleSequence.from_family(["eps", "1/(2*k + 1)"])
    plan = reduce_two_scale(seq)
    assert plan.rewrite_needed
    assert plan.lambda_ == pytest.approx(0.5)
    assert plan.m == 1
    assert plan.fixed_scales[0] == pytest.approx(1.0, rel=1e-6)
    assert plan.vanishing == (0,)
    assert rewriting_residual(seq, plan) <= 1e-12


def test_two_scale_rewrite_collapses_exact_multiple():
    seq = ScaleSequence.from_family(["eps", "1/(2*k)"])
    plan = reduce_two_scale(seq)
    assert plan.collapsed == (1,)
    assert plan.m == 0
    (variable,) = plan.variables
    assert variable.kind == "periodic"
    assert variable.coefficients == (1.0, 2.0)
    assert rewriting_residual(seq, plan) <= 1e-12


def test_two_scale_rewrite_with_vanishing_remainder():
    seq = ScaleSequence.from_family(["eps", "1/(2*k + sqrt(k))"])
    plan = reduce_two_scale(seq)
    assert plan.m == 0
    assert plan.vanishing == (0, 1)
    assert rewriting_residual(seq, plan) <= 1e-12


def test_separated_pair_needs_no_rewrite():
    seq = ScaleSequence.from_family(["eps", "eps**2"])
    plan = reduce_two_scale(seq)
    assert not plan.rewrite_needed
    assert plan.lambda_ == 0.0
    assert np.array_equal(plan.substitution, np.eye(2))


def test_rearrange_matches_two_scale_rewrite():
    seq = ScaleSequence.from_family(["eps", "1/(2*k + 1)"])
    plan = rearrange(seq, classify(seq))
    assert plan.rounds == 1
    assert plan.m == 1
    assert plan.fixed_scales[0] == pytest.approx(1.0, rel=1e-6)


def test_rearrange_keeps_separated_scales():
    seq = ScaleSequence.from_family(["eps", "eps**2", "eps**3"])
    plan = rearrange(seq, classify(seq))
    assert not plan.rewrite_needed
    assert plan.rounds == 0
    assert plan.m == 0
    assert plan.vanishing == (0, 1, 2)


def test_rearrange_bundles_golden_ratio_into_one_quasi_variable():
    seq = ScaleSequence.from_family(["eps", "eps/phi"])
    plan = rearrange(seq, classify(seq))
    assert plan.collapsed == (1,)
    (variable,) = plan.variables
    assert variable.kind == "quasi"
    assert variable.coefficients == pytest.approx((1.0 / GOLDEN, 1.0))
    M = variable.projection(2)
    assert M.shape == (4, 2)
    assert rewriting_residual(seq, plan) <= 1e-12


def test_every_index_is_covered_once():
    seq = ScaleSequence.from_family(["eps", "1/(2*k + 1)", "eps**3"])
    plan = rearrange(seq, classify(seq))
    groups = plan.coverage()
    assert sorted(sum(groups.values(), [])) == [0, 1, 2]
    assert plan.rounds <= 2


@given(st.integers(min_value=2, max_value=5), st.floats(min_value=0.5, max_value=5.0))
def test_rewriting_identity_holds_on_every_row(a, b):
    rows = [(1.0 / k, 1.0 / (a * k + b)) for k in K]
    seq = ScaleSequence.from_rows(rows, k=K)
    plan = rearrange(seq)
    assert plan.m == 1
    assert plan.fixed_scales[0] == pytest.approx(1.0 / b, rel=1e-6)
    assert rewriting_residual(seq, plan) <= 1e-12
