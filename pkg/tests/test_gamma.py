import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypokinetic.constants import ProblemParams, build_coefficients
from hypokinetic.gamma import (GAMMA_KINDS, SIGMA_KINDS, GammaKind, TensorCoefficients,
                               certify_bakry_emery, certify_identities, check_bakry_emery,
                               gamma, gamma2, generator_apply, sample_pairs, sigma2, tensor_T,
                               tensor_T2)
from hypokinetic.geometry import ModelManifold, random_frame_points
from hypokinetic.testfunctions import battery, concat_terms, constant, monomial

E2 = ModelManifold.euclidean(2)
TORUS2 = ModelManifold.flat_torus(2, 1.0)
MANIFOLDS = [E2, ModelManifold.euclidean(3), TORUS2, ModelManifold.flat_torus(3, 1.0),
             ModelManifold.sphere2(1.0), ModelManifold.sphere2(2.0)]
IDS = [m.spec() for m in MANIFOLDS]
X1 = monomial(2, xpow=[1, 0])
COS_THETA = monomial(2, epow=[1, 0])


def _angles(seed=0, count=12):
    p = random_frame_points(E2, seed, count)
    return p, np.arctan2(p.e[:, 0, 1], p.e[:, 0, 0])


def test_generator_kills_constants():
    p = random_frame_points(TORUS2, 0, 5)
    assert np.all(generator_apply(TORUS2, 1.0, 1.0, constant(2, 2.0), p) == 0)


def test_generator_on_coordinate_and_fiber_harmonic():
    p, th = _angles()
    assert np.allclose(generator_apply(E2, 1.0, 1.0, X1, p), np.cos(th), atol=1e-14)
    assert np.allclose(generator_apply(E2, 1.0, 0.0, COS_THETA, p), -0.5 * np.cos(th), atol=1e-14)


@pytest.mark.parametrize("kind", GAMMA_KINDS)
def test_forms_vanish_on_constants(kind):
    p = random_frame_points(TORUS2, 1, 4)
    c = constant(2, 5.0)
    assert np.all(gamma(kind, TORUS2, c, c, p) == 0)
    for method in ("definitional", "closed"):
        assert np.all(gamma2(kind, method, TORUS2, 1.0, 1.0, c, p) == 0)


def test_first_order_forms_of_coordinate():
    p, th = _angles()
    assert np.all(gamma(GammaKind.Vv, E2, X1, X1, p) == 0)
    assert np.allclose(gamma(GammaKind.Xi, E2, X1, X1, p), np.cos(th) ** 2, atol=1e-14)


@pytest.mark.parametrize("m", MANIFOLDS, ids=IDS)
def test_mixed_form_symmetric(m):
    fs, ps = sample_pairs(m, 50, 2)
    gs = battery(m, 50, seed=3)
    assert np.allclose(gamma(GammaKind.VH, m, fs, gs, ps), gamma(GammaKind.VH, m, gs, fs, ps),
                       rtol=0, atol=1e-12)


def test_xi_iterated_form_of_coordinate():
    p, th = _angles()
    for method in ("definitional", "closed"):
        assert np.allclose(gamma2(GammaKind.Xi, method, E2, 1.0, 1.0, X1, p),
                           -0.5 * np.cos(2 * th), atol=1e-12)


def test_sigma_vertical_of_fiber_harmonic():
    p, th = _angles()
    for method in ("definitional", "closed"):
        assert np.allclose(sigma2(GammaKind.SigmaV, method, E2, 1.0, 0.0, COS_THETA, p),
                           0.5 * np.sin(th) ** 2, atol=1e-12)
    for kind in SIGMA_KINDS:
        assert np.all(sigma2(kind, "closed", E2, 1.0, 1.0, constant(2, 1.0), p) == 0)


@pytest.mark.parametrize("m", MANIFOLDS, ids=IDS)
def test_definitional_matches_closed(m):
    for rep in certify_identities(m, count=50, seed=0):
        assert rep.passed, rep.to_record()


def test_opposite_kappa_sign_in_vertical_form_fails():
    rep = certify_identities(TORUS2, kinds=[GammaKind.Vv], count=20, printed=True)[0]
    assert rep.worst_relative > 1e-2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
def test_forms_are_bilinear(seed, alpha, beta):
    m = ModelManifold.sphere2(1.0)
    f, g, h = (battery(m, 1, seed=seed + k) for k in range(3))
    p = random_frame_points(m, seed, 1)
    combo = concat_terms([f.scaled(alpha), g.scaled(beta)])
    for kind in GAMMA_KINDS:
        lhs = gamma(kind, m, combo, h, p)
        rhs = alpha * gamma(kind, m, f, h, p) + beta * gamma(kind, m, g, h, p)
        assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


@pytest.mark.parametrize("m", MANIFOLDS, ids=IDS)
def test_diagonal_forms_nonnegative(m):
    fs, ps = sample_pairs(m, 40, 4)
    for kind in (GammaKind.Vv, GammaKind.HH, GammaKind.Xi):
        assert np.all(gamma(kind, m, fs, fs, ps) >= -1e-14)


def test_tensor_lower_bound():
    eps, a, c = 0.5, 2.0, 3.0
    coeffs = TensorCoefficients(a, np.sqrt(a * c * eps), c, 0.7)
    fs, ps = sample_pairs(TORUS2, 100, 5)
    energy = sum(gamma(k, TORUS2, fs, fs, ps) for k in (GammaKind.Vv, GammaKind.HH, GammaKind.Xi))
    bound = min(a * (1 - np.sqrt(eps)), c * (1 - np.sqrt(eps)), 0.7) * energy
    assert np.all(tensor_T(coeffs, TORUS2, fs, ps) >= bound - 1e-12 * (1 + energy))


def test_tensor_iterated_is_linear_in_coefficients():
    coeffs = TensorCoefficients(5.0, 1.0, 2.0, 0.5)
    fs, ps = sample_pairs(TORUS2, 20, 6)
    parts = {k: gamma2(k, "closed", TORUS2, 1.0, 1.0, fs, ps) for k in GAMMA_KINDS}
    expect = 5.0 * parts[GammaKind.Vv] - 2.0 * parts[GammaKind.VH] + 2.0 * parts[GammaKind.HH] \
        + 0.5 * parts[GammaKind.Xi]
    assert np.allclose(tensor_T2(coeffs, TORUS2, 1.0, 1.0, fs, ps), expect, rtol=0, atol=1e-12)


def test_indefinite_tensor_warns():
    with pytest.warns(RuntimeWarning):
        tensor_T(TensorCoefficients(1.0, 2.0, 1.0, 1.0), TORUS2, X1, random_frame_points(TORUS2, 0, 1))


def test_bakry_emery_on_torus():
    cs = build_coefficients(ProblemParams(1.0, 1.0, 2, 0.0), 0.5, 1.0, "corrected")
    rec = certify_bakry_emery(cs, TORUS2, count=200, seed=0)
    assert rec["passed"], rec


def test_bakry_emery_carre_du_champ_is_scaled_vertical_form():
    cs = build_coefficients(ProblemParams(1.3, 0.7, 2, 0.0), 0.5, 1.0, "corrected")
    fs, ps = sample_pairs(TORUS2, 30, 1)
    slack = check_bakry_emery(cs, TORUS2, 1.3, 0.7, fs, ps)
    assert np.allclose(slack.gamma, 0.5 * 1.3 ** 2 * gamma(GammaKind.Vv, TORUS2, fs, fs, ps))


def test_bakry_emery_constant_slack_zero():
    cs = build_coefficients(ProblemParams(1.0, 1.0, 2, 0.0), 0.5, 1.0, "corrected")
    slack = check_bakry_emery(cs, TORUS2, 1.0, 1.0, constant(2, 1.0),
                              random_frame_points(TORUS2, 0, 3))
    assert np.all(slack.s1 == 0) and np.all(slack.s2 == 0)


def test_bakry_emery_rejects_mismatched_curvature():
    cs = build_coefficients(ProblemParams(1.0, 1.0, 2, 0.0), 0.5, 1.0, "corrected")
    m = ModelManifold.sphere2(1.0)
    with pytest.raises(ValueError):
        check_bakry_emery(cs, m, 1.0, 1.0, X1, random_frame_points(m, 0, 1))
