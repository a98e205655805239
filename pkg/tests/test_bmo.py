"""Integrability analysis: norms, exponents, inequality checks, classifier."""

import math

import numpy as np
import pytest

from qbsde import (
    BOUNDED,
    NO_SOLUTION,
    UNBOUNDED,
    apriori_bound,
    bmo_norm,
    bmo_report,
    classify,
    critical_exponent,
    dyn_exp_moment,
    john_nirenberg_check,
    kq_curve,
    kq_numeric,
    kq_threshold,
    mpr_constant,
    mpr_nosol,
    mpr_reverting,
    mpr_scaled,
    mpr_sigma_gamma,
    mpr_tilde,
    mpr_zero,
    reverse_holder,
    reverting_rh_lower,
    scaled_params,
    scaled_tilted_order,
    sigma_cut_lower_bound,
)

Q = -1.0


# ---------------------------------------------------------------------------
# Threshold arithmetic
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("q", [-4.0, -1.0, -0.2])
def test_kq_numeric_agrees_with_closed_form(q):
    assert abs(kq_numeric(q) - kq_threshold(q)) <= 1e-10


def test_kq_curve_structure():
    rows = kq_curve(np.array([0.25, 0.5, 0.75]))
    for p, q, k in rows:
        assert q == pytest.approx(p / (p - 1.0), rel=1e-15)
        assert k == pytest.approx(kq_threshold(q), rel=1e-15)
    assert rows[0][2] < rows[1][2] < rows[2][2]
    with pytest.raises(ValueError):
        kq_curve(np.array([1.0]))


def test_scaled_tilted_order_certificates():
    below = mpr_scaled(Q, *scaled_params(Q, k=1.0, mode="below"))
    assert scaled_tilted_order(below) == pytest.approx(1.0, rel=1e-10)
    critical = mpr_scaled(Q, *scaled_params(Q, mode="critical"))
    assert scaled_tilted_order(critical) < 1.0


# ---------------------------------------------------------------------------
# Analytic lower bounds
# ---------------------------------------------------------------------------


def test_reverting_rh_lower_values_and_domain():
    assert reverting_rh_lower(0.0, 0.0, Q, 1.0) == 1.0
    w = np.array([-2.0, 0.0, 2.0])
    vals = reverting_rh_lower(0.25, w, Q, 1.0)
    assert np.allclose(vals, np.exp(-Q * 0.75 * np.abs(w) / 2.0), rtol=1e-12)
    with pytest.raises(ValueError):
        reverting_rh_lower(-0.1, 0.0, Q, 1.0)
    with pytest.raises(ValueError):
        reverting_rh_lower(1.0, 0.0, Q, 1.0)


def test_sigma_cut_lower_bound():
    # Trivial off the unit scale, nontrivial formula at |c| = 1.
    assert sigma_cut_lower_bound(3.0, Q, c_scale=0.5) == 1.0
    u = 2.0
    s = -Q * math.pi / (2.0 * math.sqrt(-Q))
    expected = max(math.exp(-s) * ((math.pi**2 / 4.0) * u - 1.75), 1e-300)
    assert sigma_cut_lower_bound(u, Q) == pytest.approx(expected, rel=1e-12)
    # Floor kicks in where the bracket would go negative.
    assert sigma_cut_lower_bound(0.1, Q) == 1e-300


# ---------------------------------------------------------------------------
# Norm and dynamic moments
# ---------------------------------------------------------------------------


def test_bmo_norm_zero_kind(ens_small):
    # Zero premium has exactly zero quadratic exposure.
    est = bmo_norm(mpr_zero(), ens_small)
    assert est.estimate == 0.0 and not est.unbounded


def test_bmo_norm_constant_kind(ens_mid):
    # sup_t E[int_t^T level^2 ds | F_t] = level^2 T at t = 0.
    est = bmo_norm(mpr_constant(0.5), ens_mid)
    assert not est.unbounded
    assert est.estimate == pytest.approx(0.25, rel=0.05)
    assert est.estimate <= est.upper_confidence


def test_bmo_norm_reverting_finite_but_growing(ens_mid):
    est = bmo_norm(mpr_reverting(), ens_mid)
    # |W| exposure: finite family-restricted estimate, growth-flagged.
    assert est.unbounded
    assert math.isinf(est.estimate)
    assert est.growth_note is not None


def test_dyn_exp_moment_constant_all_finite(ens_mid):
    dyn = dyn_exp_moment(mpr_constant(0.5), ens_mid, k=1.0)
    assert dyn.cells
    assert not dyn.diverged
    assert math.isfinite(dyn.estimate)
    assert dyn.as_row() == (1.0, dyn.estimate, False)


def test_dyn_exp_moment_nosol_top_cell_diverges(ens_mid):
    dyn = dyn_exp_moment(mpr_nosol(Q), ens_mid, k=1.0)
    assert dyn.diverged
    assert math.isinf(dyn.estimate)
    assert dyn.worst_cell is not None
    assert dyn.evidence is not None and dyn.evidence.diverged


# ---------------------------------------------------------------------------
# Critical exponent brackets
# ---------------------------------------------------------------------------


def test_critical_exponent_zero_kind_infinite(ens_small):
    ce = critical_exponent(mpr_zero(), ens_small)
    assert ce.infinite and math.isinf(ce.interval[1])
    ks = [k for (k, _, _) in ce.probes]
    assert ks == sorted(ks)


def test_critical_exponent_nosol_brackets_half(ens_mid):
    ce = critical_exponent(mpr_nosol(Q), ens_mid)
    assert not ce.infinite
    assert ce.lo <= 0.5 <= ce.hi
    assert ce.hi / ce.lo <= 1.5  # bisection tightened the bracket


# ---------------------------------------------------------------------------
# Inequality checks
# ---------------------------------------------------------------------------


def test_john_nirenberg_zero_and_constant(ens_mid):
    jn0 = john_nirenberg_check(mpr_zero(), ens_mid)
    assert jn0.status == "pass"
    jn = john_nirenberg_check(mpr_constant(0.5), ens_mid)
    assert jn.status == "pass"
    assert jn.bound == pytest.approx(1.0 / (1.0 - jn.norm_sq), rel=1e-12)
    assert jn.max_violation <= 0.0 + 1e-12


def test_john_nirenberg_skips_on_large_norm(ens_mid):
    jn = john_nirenberg_check(mpr_nosol(Q), ens_mid)
    assert jn.status == "skipped"
    assert jn.norm_sq >= 1.0
    assert math.isinf(jn.bound)


@pytest.mark.parametrize(
    "spec,verdict",
    [
        (mpr_zero(), "Bounded"),
        (mpr_constant(0.5), "Bounded"),
        (mpr_nosol(-1.0).with_scale(0.5), "Bounded"),
        (mpr_reverting(), "Unbounded"),
    ],
)
def test_reverse_holder_verdicts(spec, verdict, ens_mid):
    rh = reverse_holder(spec, Q, ens_mid)
    assert rh.verdict == verdict


def test_reverse_holder_accepts_positive_q(ens_mid):
    rh = reverse_holder(mpr_constant(0.5), 0.5, ens_mid)
    assert rh.verdict == "Bounded"
    with pytest.raises(ValueError):
        reverse_holder(mpr_constant(0.5), 1.0, ens_mid)


def test_apriori_bound_trivial_at_q_zero(ens_small):
    chk = apriori_bound(mpr_constant(0.5), 0.0, ens_small)
    assert chk.status == "pass" and chk.upper == 0.0


def test_apriori_bound_constant_passes(ens_mid):
    chk = apriori_bound(mpr_constant(0.5), 0.5, ens_mid)
    assert chk.status == "pass"
    assert chk.upper > 0.0
    assert chk.max_upper_violation <= 1e-12
    assert chk.max_lower_violation <= 1e-12


def test_apriori_bound_skips_when_smallness_fails(ens_mid):
    chk = apriori_bound(mpr_nosol(Q), 0.5, ens_mid)
    assert chk.status == "skipped"
    assert chk.gamma_tilde * chk.eta_sq >= 1.0


def test_apriori_bound_rejects_negative_q(ens_small):
    with pytest.raises(ValueError):
        apriori_bound(mpr_constant(0.5), -0.5, ens_small)


# ---------------------------------------------------------------------------
# Reports and classification
# ---------------------------------------------------------------------------


def test_bmo_report_invariants(ens_small):
    rep = bmo_report(mpr_constant(0.5), ens_small, q=Q)
    ks = [k for (k, _, _) in rep.moments]
    assert ks == sorted(ks)
    assert rep.k_q == pytest.approx(kq_threshold(Q), rel=1e-12)
    record = rep.to_json_record()
    assert set(record) >= {"norm", "exponent"}


def test_classify_bounded_kinds(ens_mid):
    cls = classify(mpr_zero(), Q, ens_mid, with_exponent=False)
    assert cls.verdict == BOUNDED
    cls = classify(mpr_constant(0.5), Q, ens_mid, with_exponent=False)
    assert cls.verdict == BOUNDED


def test_classify_nosol_full_scale(ens_mid):
    cls = classify(mpr_nosol(Q), Q, ens_mid, with_exponent=False)
    assert cls.verdict == NO_SOLUTION
    assert any(e["test"] == "summand-divergence" and e["outcome"] == "diverged"
               for e in cls.evidence)


def test_classify_reverting_unbounded(ens_mid):
    cls = classify(mpr_reverting(), Q, ens_mid, with_exponent=False)
    assert cls.verdict == UNBOUNDED


def test_classify_scaled_certificate_needs_matching_q(ens_mid):
    spec = mpr_scaled(Q, *scaled_params(Q, mode="critical"))
    cls = classify(spec, Q, ens_mid, with_exponent=False)
    assert cls.verdict == BOUNDED
    assert any(e["test"] == "construction-certificate" for e in cls.evidence)
    # At a different ambient q the certificate must not be used.
    cls_other = classify(spec, -0.5, ens_mid, with_exponent=False)
    assert not any(e["test"] == "construction-certificate" for e in cls_other.evidence)


def test_classify_exponent_interval_when_requested(ens_mid):
    cls = classify(mpr_nosol(Q).with_scale(0.5), Q, ens_mid)
    assert cls.exponent_interval is not None
    lo, hi = cls.exponent_interval
    assert lo <= hi
    assert cls.threshold_side in ("below k_q", "above k_q", "straddles k_q")
    record = cls.to_json_record()
    assert record["verdict"] == cls.verdict


def test_classify_rejects_q_at_one(ens_small):
    with pytest.raises(ValueError):
        classify(mpr_zero(), 1.0, ens_small)
