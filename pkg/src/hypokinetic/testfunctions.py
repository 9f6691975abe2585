"""Smooth scalar functions on the unit tangent bundle used as probes.

Each function is a finite sum of terms

    coef * cos(freq . x + phase) * prod_k x_k**xpow_k * prod_k (e0_k)**epow_k

in chart coordinates ``x`` and chart components of the first frame vector
``e0``.  Functions depend on the frame only through ``e0``, so they are pulled
back from the unit tangent bundle.  Parameter arrays may carry leading batch
axes; evaluation broadcasts them against the batch axes of the points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffengine import Jet

MAX_POWER = 3


@dataclass(frozen=True)
class TestFunction:
    coef: np.ndarray    # (*S, T)
    freq: np.ndarray    # (*S, T, n)
    phase: np.ndarray   # (*S, T)
    xpow: np.ndarray    # (*S, T, n) ints
    epow: np.ndarray    # (*S, T, n) ints
    seed: int | None = None
    label: str = field(default="", compare=False)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        for name in ("coef", "freq", "phase"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("xpow", "epow"):
            arr = np.asarray(getattr(self, name), dtype=int)
            if arr.size and (arr.min() < 0 or arr.max() > MAX_POWER):
                raise ValueError(f"{name} entries must lie in 0..{MAX_POWER}")
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.freq.shape[-1]

    @property
    def terms(self) -> int:
        return self.coef.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.coef.shape[:-1]

    # -- evaluation ---------------------------------------------------------------
    def evaluate(self, x, e0) -> np.ndarray:
        """Plain evaluation; ``x`` and ``e0`` have shape ``(*B, n)``."""
        x = np.asarray(x, dtype=float)[..., None, :]
        e0 = np.asarray(e0, dtype=float)[..., None, :]
        arg = (self.freq * x).sum(-1) + self.phase
        mono = np.prod(x ** self.xpow * e0 ** self.epow, axis=-1)
        return (self.coef * np.cos(arg) * mono).sum(-1)

    def __call__(self, x, e0) -> np.ndarray:
        return self.evaluate(x, e0)

    def on_jets(self, x: Jet, e0: Jet) -> Jet:
        """Evaluate on jets ``x``, ``e0`` of batch shape ``(*B, n)``."""
        x = x.expand_dims(-2)      # (*B, 1, n)
        e0 = e0.expand_dims(-2)
        arg = (x * self.freq).sum(-1) + self.phase          # (*BS, T)
        mono = _select_powers(x, self.xpow) * _select_powers(e0, self.epow)
        prod = mono[..., 0]
        for k in range(1, mono.shape[-1]):
            prod = prod * mono[..., k]
        return (arg.cos() * prod * self.coef).sum(-1)

    def on_point_jet(self, q: Jet, n: int) -> Jet:
        """Evaluate on an ambient point jet ``q`` laid out as ``(x, e.ravel())``."""
        return self.on_jets(q[..., :n], q[..., n:2 * n])

    # -- batching -------------------------------------------------------------------
    def __getitem__(self, idx) -> "TestFunction":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return TestFunction(self.coef[idx], self.freq[idx], self.phase[idx],
                            self.xpow[idx], self.epow[idx], self.seed, self.label)

    def reshape_batch(self, *shape) -> "TestFunction":
        T, n = self.terms, self.n
        return TestFunction(self.coef.reshape(shape + (T,)), self.freq.reshape(shape + (T, n)),
                            self.phase.reshape(shape + (T,)), self.xpow.reshape(shape + (T, n)),
                            self.epow.reshape(shape + (T, n)), self.seed, self.label)

    def __len__(self):
        return self.batch_shape[0] if self.batch_shape else 1

    def scaled(self, factor: float) -> "TestFunction":
        return TestFunction(self.coef * factor, self.freq, self.phase, self.xpow, self.epow,
                            self.seed, self.label)


def _select_powers(base: Jet, powers: np.ndarray) -> Jet:
    """Jet of ``base ** powers`` with integer powers chosen per entry."""
    out = None
    acc = None
    for p in range(int(powers.max()) + 1 if powers.size else 1):
        acc = Jet.constant(base.algebra, np.ones(base.shape)) if p == 0 else acc * base
        term = acc * (powers == p).astype(float)
        out = term if out is None else out + term
    return out


def stack(functions: Sequence[TestFunction]) -> TestFunction:
    """Stack single functions with equal term counts into one batched function."""
    return TestFunction(
        np.stack([f.coef for f in functions]), np.stack([f.freq for f in functions]),
        np.stack([f.phase for f in functions]), np.stack([f.xpow for f in functions]),
        np.stack([f.epow for f in functions]),
    )


def concat_terms(functions: Sequence[TestFunction]) -> TestFunction:
    """Sum of functions, as one function with the concatenated term lists."""
    return TestFunction(
        np.concatenate([f.coef for f in functions], -1),
        np.concatenate([f.freq for f in functions], -2),
        np.concatenate([f.phase for f in functions], -1),
        np.concatenate([f.xpow for f in functions], -2),
        np.concatenate([f.epow for f in functions], -2),
    )


# -- constructors ---------------------------------------------------------------------

def monomial(n: int, coef=1.0, freq=None, phase=0.0, xpow=None, epow=None,
             label: str = "") -> TestFunction:
    """Single-term function, e.g. ``monomial(2, xpow=[1, 0])`` is ``x_1``."""
    freq = np.zeros(n) if freq is None else np.asarray(freq, float)
    xpow = np.zeros(n, int) if xpow is None else np.asarray(xpow, int)
    epow = np.zeros(n, int) if epow is None else np.asarray(epow, int)
    return TestFunction([coef], freq[None], [phase], xpow[None], epow[None], label=label)


def constant(n: int, value: float) -> TestFunction:
    return monomial(n, coef=value, label=f"const({value})")


def random_test_function(manifold, rng: np.random.Generator, terms: int = 4,
                         seed: int | None = None) -> TestFunction:
    """Random trigonometric/polynomial probe adapted to ``manifold``.

    Torus probes are periodic in the lattice; Euclidean probes may carry a
    linear factor in ``x``; sphere-chart probes use integer frequencies in the
    longitude.
    """
    n = manifold.n
    coef = rng.normal(size=terms)
    phase = rng.uniform(0, 2 * np.pi, size=terms)
    epow = np.zeros((terms, n), int)
    xpow = np.zeros((terms, n), int)
    for t in range(terms):
        for _ in range(rng.integers(0, 3)):
            epow[t, rng.integers(n)] += 1
    kind = manifold.kind
    if kind == "flat-torus":
        freq = 2 * np.pi * rng.integers(-2, 3, size=(terms, n)) / manifold.side_length
    elif kind == "euclidean":
        freq = rng.normal(scale=1.5, size=(terms, n))
        for t in range(terms):
            if rng.random() < 0.5:
                xpow[t, rng.integers(n)] = 1
    else:
        freq = np.column_stack([rng.normal(scale=1.5, size=terms),
                                rng.integers(-2, 3, size=terms).astype(float)])
    return TestFunction(coef, freq, phase, xpow, epow, seed=seed)


def battery(manifold, count: int = 20, seed: int = 0, terms: int = 4) -> TestFunction:
    """``count`` seeded random probes stacked into a batch of shape ``(count,)``."""
    funcs = [random_test_function(manifold, np.random.default_rng([seed, k]), terms, seed=k)
             for k in range(count)]
    return stack(funcs)
