import numpy as np
import pytest
from scipy import stats

from hypokinetic.geometry import FramePoint, ModelManifold
from hypokinetic.simulator import (ConfigError, InsufficientSignalError, SimConfig,
                                   estimate_decay_rate, estimate_diffusivity, msd_theory, simulate,
                                   step, target_diffusivity)
from hypokinetic.testfunctions import monomial

TORUS2 = ModelManifold.flat_torus(2, 1.0)
COS_X1 = monomial(2, freq=[2 * np.pi, 0.0])


def _frame(theta, x=(0.1, 0.2)):
    c, s = np.cos(theta), np.sin(theta)
    return FramePoint(np.array(x, float), np.array([[c, s], [-s, c]]))


def test_geodesic_step_is_exact():
    p = _frame(0.7)
    q = step(TORUS2, p, 1e-2, 0.0, 2.0, np.random.default_rng(0))
    assert np.allclose(q.x, p.x + 2e-2 * p.e[0], atol=1e-15)
    assert np.allclose(q.e, p.e, atol=1e-15)


def test_geodesic_step_on_fiber_bundle():
    m = ModelManifold.euclidean(3)
    p = FramePoint(np.zeros(3), np.eye(3))
    q = step(m, p, 0.1, 0.0, 1.5, np.random.default_rng(0))
    assert np.allclose(q.x, [0.15, 0.0, 0.0]) and np.allclose(q.e, np.eye(3))


def test_single_path_wraps_exactly():
    cfg = SimConfig(TORUS2, 0.0, 1.0, 1e-2, 3.0, 1, observables={"x1": monomial(2, xpow=[1, 0])},
                    initial_point=_frame(0.3, (0.0, 0.0)))
    res = simulate(cfg)
    t, mean, _ = res.series("x1")
    assert np.allclose(mean, np.mod(np.cos(0.3) * t, 1.0), atol=1e-12)


@pytest.mark.parametrize("m", [TORUS2, ModelManifold.flat_torus(3, 1.0)], ids=["n2", "n3"])
def test_fiber_correlation_decay(m):
    n = m.n
    obs = {"v": monomial(n, epow=np.eye(n, dtype=int)[0])}
    res = simulate(SimConfig(m, 1.0, 0.0, 1e-2, 2.0, 10_000, seed=3, observables=obs))
    for t_check in (0.5, 1.0, 2.0):
        j = int(np.argmin(np.abs(res.times - t_check)))
        expect = np.exp(-(n - 1) * t_check / 2)
        assert abs(res.mean[0, j] - expect) <= 3 * res.stderr[0, j]


def test_fiber_angle_becomes_uniform():
    res = simulate(SimConfig(TORUS2, 1.0, 0.0, 1e-2, 10.0, 10_000, seed=4, keep_terminal=True))
    e0 = res.terminal.e[:, 0]
    angle = np.arctan2(e0[:, 1], e0[:, 0])
    assert stats.kstest(angle, stats.uniform(-np.pi, 2 * np.pi).cdf).pvalue > 0.01
    assert np.allclose(res.terminal.x, 0.0)


def test_uniform_law_is_stationary_on_torus():
    res = simulate(SimConfig(TORUS2, 1.0, 1.0, 1e-2, 5.0, 10_000, seed=5,
                             observables={"c": COS_X1}, initial_law="uniform"))
    assert np.all(np.abs(res.mean[0]) <= 4 * res.stderr[0])


def test_haar_law_is_stationary_on_sphere():
    m = ModelManifold.sphere2(1.0)
    obs = {"z": monomial(2, freq=[1.0, 0.0])}
    res = simulate(SimConfig(m, 1.0, 1.0, 1e-2, 3.0, 10_000, seed=6, observables=obs,
                             initial_law="uniform"))
    assert np.all(np.abs(res.mean[0]) <= 4 * res.stderr[0])
    assert res.max_frame_defect <= 1e-10


def test_frames_stay_orthonormal_in_higher_dimension():
    res = simulate(SimConfig(ModelManifold.euclidean(4), 1.0, 1.0, 1e-2, 2.0, 500, seed=1))
    assert res.max_frame_defect <= 1e-12


def test_seeded_runs_identical_across_thread_counts(monkeypatch):
    cfg = SimConfig(TORUS2, 1.0, 1.0, 1e-2, 1.0, 5000, seed=9, observables={"c": COS_X1})
    monkeypatch.setenv("HYPOKINETIC_THREADS", "1")
    a = simulate(cfg)
    monkeypatch.setenv("HYPOKINETIC_THREADS", "4")
    b = simulate(cfg)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(dt=2.0), dict(paths=0), dict(sigma=-1.0),
                                    dict(dt=0.6), dict(initial_law="gaussian")])
def test_invalid_configs(kwargs):
    base = dict(manifold=TORUS2, sigma=1.0, kappa=1.0, dt=1e-2, horizon=1.0, paths=10)
    with pytest.raises(ConfigError):
        SimConfig(**{**base, **kwargs}).validate()


def test_no_uniform_law_on_euclidean_space():
    with pytest.raises(ConfigError):
        SimConfig(ModelManifold.euclidean(2), 1.0, 1.0, 1e-2, 1.0, 10,
                  initial_law="uniform").validate()


def test_decay_fit_exact_exponential():
    t = np.linspace(0, 10, 200)
    fit = estimate_decay_rate(t, 3 * np.exp(-0.7 * t), np.full(t.size, 1e-12))
    assert fit.rate == pytest.approx(0.7, abs=1e-9)


def test_decay_fit_noisy_interval_covers_truth():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 5, 300)
    clean = 3 * np.exp(-0.7 * t)
    y = clean * (1 + 0.01 * rng.standard_normal(t.size))
    fit = estimate_decay_rate(t, y, 0.01 * clean, seed=2)
    assert fit.ci_low <= 0.7 <= fit.ci_high


def test_decay_fit_rejects_flat_series():
    t = np.linspace(0, 5, 100)
    with pytest.raises(InsufficientSignalError):
        estimate_decay_rate(t, np.ones_like(t), np.full(t.size, 0.01))


def test_msd_theory_limits():
    assert target_diffusivity(1.0, 1.0, 2) == 4.0
    assert msd_theory(1e-4, 1.0, 1.0, 2) / 1e-8 == pytest.approx(1.0, rel=1e-3)
    assert msd_theory(1e4, 1.0, 1.0, 2) / 1e4 == pytest.approx(4.0, rel=1e-3)


def test_ballistic_start():
    res = simulate(SimConfig(ModelManifold.euclidean(2), 1.0, 1.0, 1e-4, 0.01, 2000, seed=2))
    ratio = res.msd[-1] / res.times[-1] ** 2
    assert 0.9 <= ratio <= 1.0
    assert ratio == pytest.approx(msd_theory(0.01, 1.0, 1.0, 2) / 1e-4, abs=2e-3)


def test_diffusivity_scale_check():
    res = simulate(SimConfig(ModelManifold.euclidean(2), 2.0, 2.0, 1e-2, 10.0, 4000, seed=8))
    d_hat = estimate_diffusivity(res, (3.0, 10.0), 2.0, 2)
    assert d_hat == pytest.approx(target_diffusivity(2.0, 2.0, 2), rel=0.1)


def test_diffusivity_window_must_skip_transient():
    res = simulate(SimConfig(ModelManifold.euclidean(2), 1.0, 1.0, 1e-2, 2.0, 10, seed=0))
    with pytest.raises(ValueError):
        estimate_diffusivity(res, (1.0, 2.0), 1.0, 2)


def test_uniform_law_marginals_after_long_run():
    res = simulate(SimConfig(TORUS2, 1.0, 1.0, 1e-2, 10.0, 100_000, seed=10,
                             initial_law="uniform", keep_terminal=True))
    p = res.terminal
    theta = np.arctan2(p.e[:, 0, 1], p.e[:, 0, 0])
    for sample, lo, hi in ((p.x[:, 0], 0, 1), (p.x[:, 1], 0, 1), (theta, -np.pi, np.pi)):
        counts, _ = np.histogram(sample, bins=20, range=(lo, hi))
        assert stats.chisquare(counts).pvalue > 0.01


def test_haar_moments_preserved_on_sphere():
    m = ModelManifold.sphere2(1.0)
    res = simulate(SimConfig(m, 1.0, 1.0, 1e-2, 10.0, 10_000, seed=11, initial_law="uniform",
                             keep_terminal=True))
    R = res.terminal
    for moment, target in ((R, 0.0), (R ** 2, 1 / 3)):
        se = moment.std(0) / np.sqrt(R.shape[0])
        assert np.all(np.abs(moment.mean(0) - target) <= 4 * se)
    assert res.max_frame_defect <= 1e-12


def test_halving_dt_keeps_means():
    def run(dt):
        res = simulate(SimConfig(TORUS2, 1.0, 1.0, dt, 1.0, 10_000, seed=12,
                                 observables={"c": COS_X1}, initial_point=_frame(0.4)))
        return res.mean[0, -1], res.stderr[0, -1]

    (m1, s1), (m2, s2) = run(1e-2), run(5e-3)
    assert abs(m1 - m2) <= 3 * np.hypot(s1, s2)
