"""Ensemble simulation of the kinetic diffusion ``(σ²/2) Δᵛ + κ ξ``.

One step is a Strang splitting: half a vertical substep (Brownian motion of
the velocity on its unit sphere), a full exact geodesic substep, and another
half vertical substep.  Paths are grouped in fixed-size blocks; every block
draws from its own stream spawned from the master seed, so results do not
depend on the number of worker threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .geometry import FramePoint, ModelManifold, frame_to_group, gram_schmidt, group_to_frame
from .testfunctions import TestFunction

BLOCK_SIZE = 2048
MAX_OUTPUT_POINTS = 512
STABILITY_LIMIT = 0.5


class ConfigError(ValueError):
    pass


class InsufficientSignalError(ValueError):
    pass


Observable = Callable[[np.ndarray, np.ndarray], np.ndarray]   # (x, e0) -> values


@dataclass
class SimConfig:
    manifold: ModelManifold
    sigma: float
    kappa: float
    dt: float
    horizon: float
    paths: int
    seed: int = 0
    observables: Mapping[str, TestFunction | Observable] = field(default_factory=dict)
    initial_law: str = "point"            # "point" or "uniform"
    initial_point: FramePoint | None = None
    keep_terminal: bool = False

    def validate(self):
        if self.sigma < 0 or self.kappa < 0:
            raise ConfigError("sigma and kappa must be nonnegative")
        if not self.dt > 0 or not self.horizon > 0:
            raise ConfigError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ConfigError("dt must not exceed the horizon")
        if self.paths < 1:
            raise ConfigError("paths must be >= 1")
        if self.dt * max(self.sigma ** 2, self.kappa) > STABILITY_LIMIT:
            raise ConfigError(f"stability guard: dt*max(sigma^2, kappa) must be <= {STABILITY_LIMIT}")
        if self.initial_law not in ("point", "uniform"):
            raise ConfigError("initial_law must be 'point' or 'uniform'")
        if self.initial_law == "uniform" and self.manifold.kind == "euclidean":
            raise ConfigError("no uniform law on Euclidean space")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def output_stride(self) -> int:
        dt_out = max(self.dt, self.horizon / MAX_OUTPUT_POINTS)
        return max(1, int(round(dt_out / self.dt)))


def default_point(m: ModelManifold) -> FramePoint:
    """Origin with the identity frame; on the sphere, the equator point (π/2, 0)."""
    if m.kind == "sphere2":
        r = m.radius
        return FramePoint(np.array([np.pi / 2, 0.0]), np.diag([1 / r, 1 / r]))
    return FramePoint(np.zeros(m.n), np.eye(m.n))


# -- state kernels -----------------------------------------------------------------------

class _State:
    """Vectorised path states with exact substeps."""

    def vertical(self, angle_scale: float, rng): ...
    def geodesic(self, length: float): ...
    def chart(self) -> FramePoint: ...


class _CircleState(_State):
    """n = 2 flat base: e⁰ = (cos θ, sin θ), e¹ = o (-sin θ, cos θ)."""

    def __init__(self, x, theta, orient, side_length=None):
        self.x, self.theta, self.orient = x, theta, orient
        self.L = side_length

    @classmethod
    def from_frames(cls, p: FramePoint, side_length=None):
        e = p.e
        theta = np.arctan2(e[:, 0, 1], e[:, 0, 0])
        orient = np.sign(np.linalg.det(e))
        return cls(p.x.copy(), theta, orient, side_length)

    def vertical(self, scale, rng):
        self.theta = self.theta + self.orient * scale * rng.standard_normal(self.theta.shape)

    def geodesic(self, length):
        self.x = self.x + length * np.stack([np.cos(self.theta), np.sin(self.theta)], -1)

    def chart(self):
        c, s = np.cos(self.theta), np.sin(self.theta)
        e = np.stack([np.stack([c, s], -1), self.orient[:, None] * np.stack([-s, c], -1)], -2)
        x = np.mod(self.x, self.L) if self.L else self.x
        return FramePoint(x, e)

    def unwrapped(self):
        return self.x


class _FiberState(_State):
    """n >= 3 flat base: geodesic random walk of e⁰, frame re-completed."""

    def __init__(self, x, e, side_length=None):
        self.x, self.e, self.L = x, e, side_length

    @classmethod
    def from_frames(cls, p: FramePoint, side_length=None):
        return cls(p.x.copy(), p.e.copy(), side_length)

    def vertical(self, scale, rng):
        n = self.e.shape[-1]
        z = rng.standard_normal((self.e.shape[0], n - 1))
        v = scale * np.einsum("pi,pik->pk", z, self.e[:, 1:, :])
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(norm > 0, norm, 1.0)
        e0 = np.cos(norm) * self.e[:, 0, :] + np.sin(norm) * v / safe
        e = self.e.copy()
        e[:, 0, :] = e0 / np.linalg.norm(e0, axis=-1, keepdims=True)
        self.e = gram_schmidt(e, np.eye(n))

    def geodesic(self, length):
        self.x = self.x + length * self.e[:, 0, :]

    def chart(self):
        x = np.mod(self.x, self.L) if self.L else self.x
        return FramePoint(x, self.e)

    def unwrapped(self):
        return self.x


class _GroupState(_State):
    """Sphere base: columns (x/r, e⁰, e¹) of an orthogonal 3x3 matrix."""

    def __init__(self, R, m: ModelManifold):
        self.R, self.m = R, m

    @staticmethod
    def _rotate_columns(R, i, j, angle):
        c, s = np.cos(angle), np.sin(angle)
        ci, cj = R[..., :, i], R[..., :, j]
        if np.ndim(angle):
            c, s = c[:, None], s[:, None]
        out = R.copy()
        out[..., :, i] = c * ci + s * cj
        out[..., :, j] = -s * ci + c * cj
        return out

    def vertical(self, scale, rng):
        self.R = self._rotate_columns(self.R, 1, 2, scale * rng.standard_normal(self.R.shape[0]))

    def geodesic(self, length):
        self.R = self._rotate_columns(self.R, 0, 1, length / self.m.radius)

    def chart(self):
        return group_to_frame(self.m, self.R)

    def unwrapped(self):
        return None


def _make_state(m: ModelManifold, p: FramePoint) -> _State:
    if m.kind == "sphere2":
        return _GroupState(frame_to_group(m, p), m)
    L = m.side_length if m.kind == "flat-torus" else None
    return _CircleState.from_frames(p, L) if m.n == 2 else _FiberState.from_frames(p, L)


def _strang(state: _State, dt, sigma, kappa, rng):
    half = sigma * math.sqrt(dt / 2)
    state.vertical(half, rng)
    state.geodesic(kappa * dt)
    state.vertical(half, rng)


def step(m: ModelManifold, state, dt: float, sigma: float, kappa: float, rng):
    """One Strang step for a batch of frame points (or sphere group matrices)."""
    if dt * max(sigma ** 2, kappa) > STABILITY_LIMIT:
        raise ConfigError("stability guard violated")
    if isinstance(state, FramePoint):
        single = state.x.ndim == 1
        p = FramePoint(state.x[None], state.e[None]) if single else state
        st = _make_state(m, p)
        _strang(st, dt, sigma, kappa, rng)
        out = st.chart()
        if isinstance(st, _FiberState) or isinstance(st, _CircleState):
            out = FramePoint(st.unwrapped(), out.e)   # keep base coordinates unwrapped
        return out[0] if single else out
    R = np.asarray(state, dtype=float)
    single = R.ndim == 2
    st = _GroupState(R[None] if single else R, m)
    _strang(st, dt, sigma, kappa, rng)
    return st.R[0] if single else st.R


def _initial_frames(cfg: SimConfig, count: int, rng) -> FramePoint:
    m = cfg.manifold
    if cfg.initial_law == "point":
        p = cfg.initial_point or default_point(m)
        return FramePoint(np.broadcast_to(p.x, (count, m.n)).copy(),
                          np.broadcast_to(p.e, (count, m.n, m.n)).copy())
    x = rng.uniform(0, m.side_length, size=(count, m.n))
    Q, Rm = np.linalg.qr(rng.standard_normal((count, m.n, m.n)))
    Q = Q * np.sign(np.diagonal(Rm, axis1=-2, axis2=-1))[..., None, :]
    return FramePoint(x, np.swapaxes(Q, -1, -2))


# -- ensemble statistics -------------------------------------------------------------------

@dataclass
class EnsembleStats:
    times: np.ndarray
    names: list[str]
    mean: np.ndarray          # (observables, times)
    stderr: np.ndarray
    paths: int
    msd: np.ndarray | None = None
    msd_stderr: np.ndarray | None = None
    terminal: object = None   # FramePoint (flat) or group matrices (sphere)
    max_frame_defect: float = 0.0
    config: dict = field(default_factory=dict)

    def series(self, name: str):
        i = self.names.index(name)
        return self.times, self.mean[i], self.stderr[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["time"]
        for nm in self.names:
            header += [f"{nm}_mean", f"{nm}_stderr"]
        if self.msd is not None:
            header += ["msd_mean", "msd_stderr"]
        w.writerow(header)
        for j, t in enumerate(self.times):
            row = [repr(float(t))]
            for i in range(len(self.names)):
                row += [repr(float(self.mean[i, j])), repr(float(self.stderr[i, j]))]
            if self.msd is not None:
                row += [repr(float(self.msd[j])), repr(float(self.msd_stderr[j]))]
            w.writerow(row)
        return buf.getvalue()

    def to_record(self) -> dict:
        rec = {"times": self.times.tolist(), "paths": self.paths,
               "observables": {nm: {"mean": self.mean[i].tolist(), "stderr": self.stderr[i].tolist()}
                               for i, nm in enumerate(self.names)},
               "max_frame_defect": self.max_frame_defect, "config": self.config}
        if self.msd is not None:
            rec["msd"] = {"mean": self.msd.tolist(), "stderr": self.msd_stderr.tolist()}
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=1)


def _evaluate(obs, p: FramePoint) -> np.ndarray:
    if isinstance(obs, TestFunction):
        return obs.evaluate(p.x, p.e0)
    return np.asarray(obs(p.x, p.e0), dtype=float)


def _run_block(cfg: SimConfig, names, count: int, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    m = cfg.manifold
    if cfg.initial_law == "uniform" and m.kind == "sphere2":
        from .geometry import haar_rotation
        st = _GroupState(haar_rotation(rng, count), m)
    else:
        st = _make_state(m, _initial_frames(cfg, count, rng))
    x0 = None if st.unwrapped() is None else st.unwrapped().copy()
    stride, steps = cfg.output_stride, cfg.steps
    n_out = steps // stride + 1
    k = len(names)
    s1, s2 = np.zeros((k, n_out)), np.zeros((k, n_out))
    m1, m2 = np.zeros(n_out), np.zeros(n_out)
    defect = 0.0

    def record(j):
        nonlocal defect
        p = st.chart()
        for i, nm in enumerate(names):
            v = _evaluate(cfg.observables[nm], p)
            s1[i, j], s2[i, j] = v.sum(), (v * v).sum()
        if x0 is not None:
            d2 = ((st.unwrapped() - x0) ** 2).sum(-1)
            m1[j], m2[j] = d2.sum(), (d2 * d2).sum()
        if isinstance(st, _GroupState):
            gram = np.einsum("pki,pkj->pij", st.R, st.R)
        else:
            gram = np.einsum("pik,pjk->pij", p.e, p.e)
        defect = max(defect, float(np.abs(gram - np.eye(gram.shape[-1])).max()))

    record(0)
    for s in range(1, steps + 1):
        _strang(st, cfg.dt, cfg.sigma, cfg.kappa, rng)
        if s % stride == 0:
            record(s // stride)
    terminal = None
    if cfg.keep_terminal:
        terminal = st.R.copy() if isinstance(st, _GroupState) else st.chart()
    return s1, s2, m1, m2, defect, terminal


def _workers() -> int:
    env = os.environ.get("HYPOKINETIC_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def simulate(cfg: SimConfig) -> EnsembleStats:
    cfg.validate()
    names = list(cfg.observables)
    sizes = [BLOCK_SIZE] * (cfg.paths // BLOCK_SIZE)
    if cfg.paths % BLOCK_SIZE:
        sizes.append(cfg.paths % BLOCK_SIZE)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=min(_workers(), len(sizes))) as pool:
        results = list(pool.map(lambda a: _run_block(cfg, names, *a), zip(sizes, seeds)))
    # reduction in block order keeps sums independent of scheduling
    s1 = sum(r[0] for r in results)
    s2 = sum(r[1] for r in results)
    N = cfg.paths
    mean = s1 / N
    var = np.maximum(s2 / N - mean ** 2, 0.0) * (N / max(N - 1, 1))
    stderr = np.sqrt(var / N)
    n_out = mean.shape[1] if names else cfg.steps // cfg.output_stride + 1
    times = np.arange(n_out) * cfg.output_stride * cfg.dt
    msd = msd_se = None
    if cfg.manifold.flat:
        m1 = sum(r[2] for r in results)
        m2 = sum(r[3] for r in results)
        msd = m1 / N
        msd_se = np.sqrt(np.maximum(m2 / N - msd ** 2, 0.0) * (N / max(N - 1, 1)) / N)
    terminal = None
    if cfg.keep_terminal:
        parts = [r[5] for r in results]
        if isinstance(parts[0], FramePoint):
            terminal = FramePoint(np.concatenate([q.x for q in parts]),
                                  np.concatenate([q.e for q in parts]))
        else:
            terminal = np.concatenate(parts)
    return EnsembleStats(times, names, mean.reshape(len(names), n_out),
                         stderr.reshape(len(names), n_out),
                         N, msd, msd_se, terminal, max(r[4] for r in results))


# -- estimators ----------------------------------------------------------------------------------

@dataclass
class DecayFit:
    rate: float
    ci_low: float
    ci_high: float
    window: tuple[float, float]
    points: int

    def to_record(self) -> dict:
        return {"rate": self.rate, "ci": [self.ci_low, self.ci_high],
                "window": list(self.window), "points": self.points}


def _slope(t, y):
    tc = t - t.mean()
    return float((tc * (y - y.mean())).sum() / (tc * tc).sum())


def decay_window(times, mean, stderr, drop: float = 0.5, noise: float = 3.0):
    """Index range from the first drop below ``drop``×initial to the noise floor."""
    a = np.abs(np.asarray(mean, dtype=float))
    se = np.asarray(stderr, dtype=float)
    below = np.flatnonzero(a < drop * a[0])
    if below.size == 0:
        raise InsufficientSignalError("series never drops below half its initial value")
    start = int(below[0])
    floor = np.flatnonzero(a[start:] <= noise * se[start:])
    stop = start + int(floor[0]) if floor.size else len(a)
    if stop - start < 10:
        raise InsufficientSignalError(
            f"only {stop - start} points above {noise}x stderr in the fit window")
    return start, stop


def estimate_decay_rate(times, mean, stderr, drop: float = 0.5, noise: float = 3.0,
                        bootstrap: int = 2000, level: float = 0.95, seed: int = 0) -> DecayFit:
    """Fit ``log|mean| ~ -rate t`` on the admissible window with a bootstrap CI."""
    times = np.asarray(times, dtype=float)
    mean = np.asarray(mean, dtype=float)
    stderr = np.broadcast_to(np.asarray(stderr, dtype=float), mean.shape)
    i, j = decay_window(times, mean, stderr, drop, noise)
    t, y, se = times[i:j], mean[i:j], stderr[i:j]
    rate = -_slope(t, np.log(np.abs(y)))
    rng = np.random.default_rng(seed)
    sims = y + se * rng.standard_normal((bootstrap, y.size))
    sims = np.where(np.sign(sims) == np.sign(y), sims, np.finfo(float).tiny * np.sign(y))
    tc = t - t.mean()
    ly = np.log(np.abs(sims))
    slopes = ((ly - ly.mean(1, keepdims=True)) * tc).sum(1) / (tc * tc).sum()
    q = (1 - level) / 2
    lo, hi = np.quantile(-slopes, [q, 1 - q])
    return DecayFit(rate, float(min(lo, rate)), float(max(hi, rate)),
                    (float(t[0]), float(t[-1])), int(t.size))


def target_diffusivity(sigma: float, kappa: float, n: int) -> float:
    return 4 * kappa ** 2 / ((n - 1) * sigma ** 2)


def msd_theory(t, sigma: float, kappa: float, n: int):
    """Exact ``E|x_t - x_0|²`` for a flat base from the velocity correlation."""
    g = (n - 1) * sigma ** 2 / 2
    t = np.asarray(t, dtype=float)
    return 2 * kappa ** 2 * (t / g - (1 - np.exp(-g * t)) / g ** 2)


def estimate_diffusivity(stats: EnsembleStats, t_window, sigma: float, n: int) -> float:
    """Slope of ``E|x_t|²`` against ``t`` over ``t_window``."""
    if stats.msd is None:
        raise ValueError("no displacement series (flat base required)")
    t0, t1 = t_window
    relax = 2 / ((n - 1) * sigma ** 2)
    if t0 < 5 * relax:
        raise ValueError(f"window starts before 5 relaxation times ({5 * relax:g})")
    sel = (stats.times >= t0) & (stats.times <= t1)
    if sel.sum() < 2:
        raise ValueError("window holds fewer than two output times")
    return _slope(stats.times[sel], stats.msd[sel])
