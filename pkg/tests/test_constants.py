import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypokinetic.constants import (ConstraintError, InfeasibleError, ProblemParams, SearchConfig,
                                   K_limit_sequence, asymptotic_K, build_coefficients,
                                   chain_residuals, discrepancy_report, leading_order_fit,
                                   optimize_rate, rate_report, regularization_scheme,
                                   spectral_gap, validate_coefficients)
from hypokinetic.geometry import ModelManifold

RUNNING = ProblemParams(1.0, 1.0, 3, 0.0)


@pytest.fixture(scope="module")
def chain():
    return build_coefficients(RUNNING, 0.5, 1.0)


def test_running_example_values(chain):
    assert chain.b == pytest.approx(9.0, rel=1e-15)
    assert chain.eps_dprime == pytest.approx(2 / 9, rel=1e-15)
    assert chain.a == pytest.approx(121.5, rel=1e-14)
    assert chain.c == pytest.approx(4 / 3, rel=1e-14)
    assert chain.d == pytest.approx(8 / 9, rel=1e-14)
    assert chain.rho == pytest.approx(3 / 31, rel=1e-14)


def test_running_example_constraint_report(chain):
    rep = validate_coefficients(chain)
    assert abs(chain.b ** 2 - chain.a * chain.c * chain.eps) <= 1e-12 * chain.b ** 2
    assert rep["b^2 <= ac eps"].passed and rep["D = 0"].passed
    # the literal chain breaks the Hessian discriminant and the unit normalisation
    assert set(rep.failures) == {"B^2 <= AC", "Ch = 1", "Cxi = 1"}


def test_corrected_scheme_only_misses_normalisation():
    rep = validate_coefficients(build_coefficients(RUNNING, 0.5, 1.0, "corrected"))
    assert set(rep.failures) == {"Ch = 1", "Cxi = 1"}
    assert rep["B^2 <= AC"].passed


def test_doubled_b_violates_discriminant(chain):
    rep = validate_coefficients(chain.with_b(2 * chain.b))
    assert not rep["b^2 < ac"].passed and rep["b^2 < ac"].margin < 0


def test_printed_summary_off_by_eps_squared(chain):
    rep = discrepancy_report(chain)
    assert not rep["a"]["mismatch"] and not rep["b"]["mismatch"]
    for key in ("c", "d"):
        assert rep[key]["mismatch"]
        assert rep[key]["ratio_times_eps2"] == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(sigma=st.floats(0.2, 20), kappa=st.floats(0.2, 20), n=st.integers(2, 6),
       M=st.floats(0, 3), eps=st.floats(0.01, 0.99), eps_prime=st.floats(0.01, 50),
       scheme=st.sampled_from(["chain", "corrected"]))
def test_chain_identities_hold(sigma, kappa, n, M, eps, eps_prime, scheme):
    cs = build_coefficients(ProblemParams(sigma, kappa, n, M), eps, eps_prime, scheme)
    assert max(chain_residuals(cs).values()) <= 1e-12
    assert abs(cs.D) <= 1e-12 * (1 + abs(cs.A) + abs(cs.C))
    assert min(cs.a, cs.b, cs.c, cs.d) > 0


@pytest.mark.parametrize("eps, eps_prime", [(0.0, 1.0), (1.0, 1.0), (1.5, 1.0), (0.5, 0.0)])
def test_bad_epsilons_rejected(eps, eps_prime):
    with pytest.raises(ConstraintError):
        build_coefficients(RUNNING, eps, eps_prime)


def test_rate_of_running_example(chain):
    rep = rate_report(chain, 1.0)
    assert rep.lambda_hat == pytest.approx(4 / 3 * (1 - math.sqrt(0.5)), rel=1e-12)
    assert 0 < rep.lambda_tilde < rep.lambda_hat


def test_rate_increases_with_poincare_constant(chain):
    rates = [rate_report(chain, lam).lambda_tilde for lam in np.geomspace(1e-6, 1e3, 40)]
    assert np.all(np.diff(rates) > 0)
    assert rates[0] < 1e-9


@pytest.fixture(scope="module")
def optimized():
    P = ProblemParams(1.0, 1.0, 2, 0.0, 1.0)
    return P, optimize_rate(P, SearchConfig(grid=16, iterations=100))


def test_optimizer_dominates_reference_point(optimized):
    P, res = optimized
    ref = rate_report(build_coefficients(P, 0.5, 1.0, "corrected"), 1.0).lambda_tilde
    assert res.report.lambda_tilde >= ref


def test_optimizer_deterministic(optimized):
    P, res = optimized
    again = optimize_rate(P, SearchConfig(grid=16, iterations=100))
    assert again.to_record() == res.to_record()


def test_optimized_rate_shrinks_with_noise():
    rates = [optimize_rate(ProblemParams(s, s, 2, 0.0, 1.0),
                           SearchConfig(grid=12, iterations=60)).report.lambda_tilde
             for s in (1, 2, 4, 8, 16)]
    assert all(r > 0 and math.isfinite(r) for r in rates)
    assert all(b < a for a, b in zip(rates, rates[1:]))


def test_optimizer_needs_poincare_constant():
    with pytest.raises(ValueError):
        optimize_rate(RUNNING)


def test_printed_asymptotic_constant():
    expect = 121.5 * (1 - 25.5 - 1 / 24)
    assert asymptotic_K(3, 0.5, 1.0) == pytest.approx(expect, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(eps=st.floats(0.01, 0.99), eps_prime=st.floats(0.01, 50))
def test_printed_asymptotic_constant_negative_in_plane(eps, eps_prime):
    assert asymptotic_K(2, eps, eps_prime) < 0


def test_K_settles_at_large_noise():
    ks = K_limit_sequence(3, 0.5, 1.0, sigmas=(1e1, 1e2, 1e3, 1e4))
    for u, v in zip(ks[1:], ks[2:]):
        assert abs(u - v) <= 0.01 * abs(v)


@pytest.mark.parametrize("text, gap", [("flat-torus:2:1", 1.0), ("flat-torus:3:1", 2.0),
                                       ("euclidean:2", None)])
def test_spectral_gap(text, gap):
    assert spectral_gap(ModelManifold.parse(text)) == gap


@pytest.fixture(scope="module")
def regularization():
    cs = build_coefficients(RUNNING, 0.1, 1.0)
    return regularization_scheme(RUNNING, cs.a, cs.b, cs.c)


def test_regularization_scheme_feasible(regularization):
    rs = regularization
    assert rs.s_max > 0
    assert 2 * rs.a ** 2 * RUNNING.kappa / rs.b == pytest.approx(RUNNING.sigma ** 2 / 3)
    assert rs.b_hat == pytest.approx(rs.c * RUNNING.sigma ** 2 / (32 * RUNNING.kappa))
    assert all(np.all(v) for v in rs.conditions(rs.grid).values())


def test_regularization_leading_orders(regularization):
    rs = regularization
    a_fit = leading_order_fit(rs, "A", 2) / (-rs.a * 0.5)
    c_fit = leading_order_fit(rs, "C", 6) / (-rs.c / 2 * 0.5)
    assert a_fit == pytest.approx(1.0, rel=0.05)
    assert c_fit == pytest.approx(1.0, rel=0.05)


def test_regularization_precondition():
    with pytest.raises(ConstraintError):
        regularization_scheme(RUNNING, 1.0, 1.0, 3.9)


def test_regularization_infeasible_at_coarse_eps():
    cs = build_coefficients(RUNNING, 0.2, 1.0)
    with pytest.raises(InfeasibleError):
        regularization_scheme(RUNNING, cs.a, cs.b, cs.c)
