"""Certificate constant chain, observation quadrature, end-to-end checks.

The two GOLDEN dicts are printed by scripts/certificate_reference_values.py,
which evaluates the chain independently with mpmath at 60 digits.
"""

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from stabcert.certify import (
    QUAD_RTOL,
    Certificate,
    CriterionConstants,
    _observation_integrals,
    build_certificate,
    certificate_gain_log,
    certificate_threshold,
    certificate_to_json,
    certify_end_to_end,
    recurrence_check,
    weak_observability_check,
)
from stabcert.domain import make_grid
from stabcert.geometry import Empty, Full, PeriodicSlabs, make_set
from stabcert.operators import FractionalLaplacian, diagonalize

GOLDEN_UNIT = {
    "gamma": 4.0,
    "N": 2.0,
    "CMgamma": 1.375,
    "A": 57.239675552633525,
    "tau0": 42.929756664475144,
    "T": 28.619837776316763,
    "ln_DMN": -10.772588722239781,
    "ln_alpha0": -28.994530615826309,
    "ln_B": -29.312984956876708,
    "ln_beta": -18.509623966038308,
    "ln_alpha": -9.2548119830191542,
    "ln_C": 3.3626707178802903,
}

GOLDEN_SECOND = {
    "gamma": 1.6817928305074291,
    "N": 3.692307692307692,
    "CMgamma": 172.62698844228386,
    "A": 95.076059122783236,
    "tau0": 38.624649018630692,
    "T": 25.749766012420462,
    "ln_DMN": -7.0798504569869755,
    "ln_alpha0": -26.441733069867398,
    "ln_B": -31.592866395464498,
    "ln_beta": -4.8128095507663358,
    "ln_alpha": -2.4064047753831679,
    "ln_C": 8.8235344787010848,
}


def assert_matches_golden(cert: Certificate, golden: dict):
    rel = lambda got, want: abs(got - want) / max(1.0, abs(want))
    for name in ("gamma", "N", "CMgamma", "A", "tau0", "T"):
        assert rel(getattr(cert, name), golden[name]) < 1e-12, name
    for name in ("ln_DMN", "ln_alpha0", "ln_B", "ln_beta", "ln_C"):
        assert rel(getattr(cert, name), golden[name]) < 1e-12, name
    assert rel(np.log(cert.alpha), golden["ln_alpha"]) < 1e-12


# ---------------------------------------------------------------------------
# constant chain


def test_unit_constants_match_the_reference():
    cert = build_certificate(CriterionConstants(c1=1.0, a=1.0, c2=1.0, b=1.0))
    assert_matches_golden(cert, GOLDEN_UNIT)
    assert 0.0 < cert.beta < 1.0
    assert cert.alpha == np.exp(0.5 * cert.ln_beta)


def test_second_point_matches_the_reference():
    cert = build_certificate(
        CriterionConstants(c1=0.7, a=0.5, c2=1.3, b=2.0, M=2.0, delta0=0.3)
    )
    assert_matches_golden(cert, GOLDEN_SECOND)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(c1=0.0, a=1.0, c2=1.0, b=1.0),
        dict(c1=1.0, a=-1.0, c2=1.0, b=1.0),
        dict(c1=1.0, a=1.0, c2=0.0, b=1.0),
        dict(c1=1.0, a=1.0, c2=1.0, b=0.0),
        dict(c1=1.0, a=1.0, c2=1.0, b=1.0, M=0.5),
        dict(c1=1.0, a=1.0, c2=1.0, b=1.0, delta0=-0.1),
    ],
)
def test_constants_are_validated(kwargs):
    with pytest.raises(ValueError):
        CriterionConstants(**kwargs)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(1e-3, 20.0),
    st.floats(0.1, 3.0),
    st.floats(1e-3, 5.0),
    st.floats(0.1, 3.0),
    st.floats(1.0, 100.0),
    st.floats(0.0, 5.0),
)
def test_chain_always_lands_in_the_admissible_region(c1, a, c2, b, M, delta0):
    # the slack constants are chosen so that beta < 1 structurally; a
    # violation would be an arithmetic bug, not an unlucky parameter set
    cert = build_certificate(CriterionConstants(c1=c1, a=a, c2=c2, b=b, M=M, delta0=delta0))
    assert cert.ln_beta < 0.0
    # the linear alpha may underflow to 0.0; the log form is authoritative
    assert 0.0 <= cert.alpha < 1.0
    assert cert.tau0 > 0.0 and cert.T > 0.0
    assert cert.N >= 2.0
    assert np.isfinite(cert.ln_C)


def test_threshold_validates_the_window():
    cert = build_certificate(CriterionConstants(c1=1.0, a=1.0, c2=1.0, b=1.0))
    with pytest.raises(ValueError):
        certificate_threshold(cert, 0.0)
    with pytest.raises(ValueError):
        certificate_threshold(cert, cert.tau0)


def test_threshold_is_nonincreasing_in_tau():
    cert = build_certificate(CriterionConstants(c1=1.0, a=1.0, c2=1.0, b=1.0))
    taus = np.linspace(0.05 * cert.tau0, 0.95 * cert.tau0, 20)
    ks = [certificate_threshold(cert, t) for t in taus]
    assert all(k1 >= k2 for k1, k2 in zip(ks, ks[1:]))
    assert ks[-1] >= 1
    # near tau0 = 3A/(2N) the threshold floors at (2N/3)^(1/b)
    assert certificate_threshold(cert, 0.99 * cert.tau0) == 1


def test_gain_log_matches_the_direct_formula():
    cert = build_certificate(CriterionConstants(c1=1.0, a=1.0, c2=1.0, b=1.0))
    tau = cert.A / (2.0 * cert.N)
    k = certificate_threshold(cert, tau)
    assert k == 4
    expected = np.log(tau / 4.0) - 2.0 * k
    assert certificate_gain_log(cert, tau) == pytest.approx(expected, rel=1e-14)


def test_certificate_json_is_finite_or_tagged():
    cert = build_certificate(CriterionConstants(c1=12.0, a=2.0, c2=0.5, b=0.5))
    doc = certificate_to_json(cert)
    assert doc["ln_C"] == pytest.approx(cert.ln_C)
    for v in doc.values():
        if isinstance(v, float):
            assert np.isfinite(v)


# ---------------------------------------------------------------------------
# observation quadrature


def closed_form_integrals(gram, lams, coeffs, lo, hi):
    """Exact integral of the Gram quadratic form under e^{-t lam} damping."""
    pair = lams[:, None] + lams[None, :]
    with np.errstate(invalid="ignore"):
        factor = np.where(
            pair == 0.0, hi - lo, (np.exp(-lo * pair) - np.exp(-hi * pair)) / pair
        )
    w = gram * factor
    return np.einsum("jt,jl,lt->t", coeffs.conj(), w, coeffs).real


def random_quadrature_problem(rng, n=12, trials=5):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    gram = A @ A.conj().T / n
    lams = np.sort(rng.uniform(-1.0, 5.0, n))
    coeffs = rng.standard_normal((n, trials)) + 1j * rng.standard_normal((n, trials))
    return gram, lams, coeffs


def test_simpson_ladder_agrees_with_the_closed_form(rng):
    gram, lams, coeffs = random_quadrature_problem(rng)
    vals, subintervals = _observation_integrals(gram, lams, coeffs, 0.25, 2.0, 64)
    exact = closed_form_integrals(gram, lams, coeffs, 0.25, 2.0)
    assert subintervals >= 64
    assert np.allclose(vals, exact, rtol=50 * QUAD_RTOL)


def test_simpson_ladder_agrees_with_scipy_quad(rng):
    gram, lams, coeffs = random_quadrature_problem(rng, trials=1)
    vals, _ = _observation_integrals(gram, lams, coeffs, 0.0, 1.5, 64)

    def integrand(t):
        damped = coeffs[:, 0] * np.exp(-t * lams)
        return float(np.real(damped.conj() @ gram @ damped))

    oracle, err = scipy.integrate.quad(integrand, 0.0, 1.5, limit=200)
    assert abs(vals[0] - oracle) <= max(1e-9 * abs(oracle), 10 * err)


# ---------------------------------------------------------------------------
# checks on a small certified fixture


@pytest.fixture(scope="module")
def small_certified():
    dom = make_grid(1, 10.0, 128, periodic=True)
    e = make_set(dom, PeriodicSlabs(period=1.0, fill_fraction=0.25))
    spec = FractionalLaplacian(s=1.0, c=0.0)
    result = certify_end_to_end(spec, dom, e, k_max=5, trials=50, recurrence_trials=20)
    assert result.status == "certified", result.detail
    return diagonalize(spec, dom), e, result


def test_end_to_end_produces_a_full_report(small_certified):
    _, _, result = small_certified
    assert result.certificate is not None
    assert result.hypothesis_report.verified
    assert result.dissipative_max_ratio <= 1.0 + 1e-10
    assert result.recurrence_report.passed
    assert result.observability_report.passed
    assert result.observability_report.min_margin > 0.0


def test_recurrence_check_rejects_bad_taus(small_certified):
    dec, e, result = small_certified
    cert = result.certificate
    with pytest.raises(ValueError):
        recurrence_check(dec, e, cert, [cert.tau0 * 1.5], trials=5)
    with pytest.raises(ValueError):
        recurrence_check(dec, e, cert, [-1.0], trials=5)


def test_recurrence_report_details(small_certified):
    dec, e, result = small_certified
    rep = result.recurrence_report
    assert rep.passed and rep.max_violation_rel <= 1e-7
    assert rep.worst_tau in rep.tau_samples
    assert all(n >= 64 for n in rep.subintervals.values())


def test_observability_margins_are_reproducible(small_certified):
    dec, e, result = small_certified
    cert = result.certificate
    again = weak_observability_check(dec, e, cert, trials=30, seed=7)
    once_more = weak_observability_check(dec, e, cert, trials=30, seed=7)
    assert again.min_margin == once_more.min_margin
    assert again.observation_integrals == once_more.observation_integrals
    assert again.passed


def test_empty_set_is_unverifiable():
    dom = make_grid(1, 10.0, 64, periodic=True)
    result = certify_end_to_end(
        FractionalLaplacian(s=1.0), dom, make_set(dom, Empty()), k_max=3, trials=5,
        recurrence_trials=5,
    )
    assert result.status == "hypothesis unverifiable"
    assert result.certificate is None


def test_full_domain_certifies():
    dom = make_grid(1, 10.0, 64, periodic=True)
    result = certify_end_to_end(
        FractionalLaplacian(s=1.0), dom, make_set(dom, Full()), k_max=3, trials=10,
        recurrence_trials=5,
    )
    assert result.status == "certified"
    # C(k) = 1 throughout, so the growth constant collapses to the floor
    assert result.constants.c1 <= 1e-3


def test_end_to_end_is_deterministic():
    dom = make_grid(1, 10.0, 64, periodic=True)
    e = make_set(dom, PeriodicSlabs(period=2.0, fill_fraction=0.5))
    kwargs = dict(k_max=3, trials=10, recurrence_trials=5, seed=11)
    r1 = certify_end_to_end(FractionalLaplacian(s=1.0), dom, e, **kwargs)
    r2 = certify_end_to_end(FractionalLaplacian(s=1.0), dom, e, **kwargs)
    assert r1.status == r2.status == "certified"
    assert r1.observability_report.min_margin == r2.observability_report.min_margin
    assert r1.recurrence_report.max_violation == r2.recurrence_report.max_violation
