"""Carré du champ operators, their iterates, and Bakry-Émery slack checks.

Two independent evaluation paths are provided for every iterated form:

* ``definitional``: expand ``1/2 (L Γ(f,g) - Γ(Lf,g) - Γ(f,Lg))`` with the
  diffusion Leibniz rule ``L(FG) = LF G + F LG + σ² Σ_k V_k F V_k G`` into
  words of vector fields and evaluate each word exactly with jets;
* ``closed``: combine gradient and Hessian blocks (words of length ≤ 2) with
  the frame curvature ``<R(e^i, e^0) e^0, e^j>``.

All functions broadcast over batched test functions and batched frame points.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .geometry import FieldId, FramePoint, H, ModelManifold, V, WordCache, riemann_frame
from .testfunctions import TestFunction, battery

__all__ = [
    "GammaKind", "TensorCoefficients", "TestFunction", "generator_apply", "gamma", "gamma2",
    "sigma2", "tensor_T", "tensor_T2", "check_bakry_emery", "BakryEmerySlack",
    "IdentityReport", "certify_identities", "certify_bakry_emery",
]

Operator = list[tuple[float, tuple[FieldId, ...]]]   # linear combination of words


class GammaKind(str, Enum):
    Vv = "Vv"
    VH = "VH"
    HH = "HH"
    Xi = "Xi"
    SigmaV = "SigmaV"
    SigmaVXi = "SigmaVXi"

    @property
    def is_sigma(self) -> bool:
        return self in (GammaKind.SigmaV, GammaKind.SigmaVXi)


GAMMA_KINDS = (GammaKind.Vv, GammaKind.VH, GammaKind.HH, GammaKind.Xi)
SIGMA_KINDS = (GammaKind.SigmaV, GammaKind.SigmaVXi)


# -- operator algebra -------------------------------------------------------------------

def _word(*fields: FieldId) -> Operator:
    return [(1.0, tuple(fields))]


def _laplacian(n: int) -> Operator:
    return [(1.0, (V(i), V(i))) for i in range(1, n)]


def _form(kind: GammaKind, n: int) -> list[tuple[float, Operator, Operator]]:
    """Bilinear form ``Σ coef (Y f)(Z g)`` defining each Γ or Σ."""
    if kind == GammaKind.Vv:
        return [(1.0, _word(V(i)), _word(V(i))) for i in range(1, n)]
    if kind == GammaKind.HH:
        return [(1.0, _word(H(i)), _word(H(i))) for i in range(1, n)]
    if kind == GammaKind.Xi:
        return [(1.0, _word(H(0)), _word(H(0)))]
    if kind == GammaKind.VH:
        return ([(0.5, _word(H(i)), _word(V(i))) for i in range(1, n)]
                + [(0.5, _word(V(i)), _word(H(i))) for i in range(1, n)])
    if kind == GammaKind.SigmaV:
        return [(1.0, _laplacian(n), _laplacian(n))]
    if kind == GammaKind.SigmaVXi:
        return [(1.0, _laplacian(n), _word(H(0)))]
    raise ValueError(f"unknown kind {kind!r}")


def _generator(n: int, sigma: float, kappa: float) -> Operator:
    return [(0.5 * sigma ** 2 * c, w) for c, w in _laplacian(n)] + [(kappa, (H(0),))]


def _compose(left: Operator, right: Operator) -> Operator:
    return [(c1 * c2, w1 + w2) for c1, w1 in left for c2, w2 in right]


def _apply(cache: WordCache, op: Operator) -> np.ndarray:
    return sum(c * cache(*w) for c, w in op)


def _scale(terms: Sequence) -> np.ndarray:
    return 1.0 + np.max(np.abs(np.broadcast_arrays(*terms)), axis=0)


def _caches(m: ModelManifold, f, g, p: FramePoint):
    wf = WordCache(m, f, p.coords)
    wg = wf if g is None or g is f else WordCache(m, g, p.coords)
    return wf, wg


def _as_kind(kind) -> GammaKind:
    return kind if isinstance(kind, GammaKind) else GammaKind(kind)


# -- first-order forms ------------------------------------------------------------------

def generator_apply(m: ModelManifold, sigma: float, kappa: float, f, p: FramePoint) -> np.ndarray:
    """``(σ²/2) Σ V_i² f + κ H_0 f`` at ``p``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return _apply(WordCache(m, f, p.coords), _generator(m.n, sigma, kappa))


def gamma(kind, m: ModelManifold, f, g, p: FramePoint) -> np.ndarray:
    """Bilinear form of the given kind (Γ, or Σ for the sigma kinds) at ``p``."""
    wf, wg = _caches(m, f, g, p)
    return sum(c * _apply(wf, Y) * _apply(wg, Z) for c, Y, Z in _form(_as_kind(kind), m.n))


# -- iterated forms ----------------------------------------------------------------------------

def _definitional_terms(kind: GammaKind, m, sigma, kappa, wf, wg) -> list[np.ndarray]:
    n = m.n
    L = _generator(n, sigma, kappa)
    terms = []
    for c, Y, Z in _form(kind, n):
        Yf, Zg = _apply(wf, Y), _apply(wg, Z)
        terms += [
            0.5 * c * _apply(wf, _compose(L, Y)) * Zg,
            0.5 * c * Yf * _apply(wg, _compose(L, Z)),
            -0.5 * c * _apply(wf, _compose(Y, L)) * Zg,
            -0.5 * c * Yf * _apply(wg, _compose(Z, L)),
        ]
        for k in range(1, n):
            Vk = _word(V(k))
            terms.append(0.5 * c * sigma ** 2
                         * _apply(wf, _compose(Vk, Y)) * _apply(wg, _compose(Vk, Z)))
    return terms


@dataclass
class _Blocks:
    """Gradient/Hessian blocks of ``f`` in the frame, leading axes = frame indices."""
    gv: np.ndarray      # V_i f                  (n-1, ...)
    gh: np.ndarray      # H_i f, i >= 1          (n-1, ...)
    xi: np.ndarray      # H_0 f
    hv: np.ndarray      # V_i V_j f              (n-1, n-1, ...)
    hvh: np.ndarray     # V_i H_j f              (n-1, n-1, ...)
    hvx: np.ndarray     # V_i H_0 f              (n-1, ...)
    jac: np.ndarray     # <R(e^i,e^0)e^0,e^j>   (n-1, n-1, ...)

    @classmethod
    def build(cls, m: ModelManifold, w: WordCache, p: FramePoint) -> "_Blocks":
        r = range(1, m.n)
        Rf = riemann_frame(m, p)
        jac = np.stack([np.stack([Rf[..., i, 0, 0, j] for j in r]) for i in r])
        return cls(
            gv=np.stack([w(V(i)) for i in r]),
            gh=np.stack([w(H(i)) for i in r]),
            xi=w(H(0)),
            hv=np.stack([np.stack([w(V(i), V(j)) for j in r]) for i in r]),
            hvh=np.stack([np.stack([w(V(i), H(j)) for j in r]) for i in r]),
            hvx=np.stack([w(V(i), H(0)) for i in r]),
            jac=jac,
        )

    def curvature(self, u, v):
        """``<R(u, e^0) e^0, v>`` for frame-component vectors ``u``, ``v``."""
        return np.einsum("i...,ij...,j...->...", u, self.jac, v)


def _closed_terms(kind: GammaKind, m, sigma, kappa, w: WordCache, p, printed=False):
    n = m.n
    s2 = 0.5 * sigma ** 2
    b = _Blocks.build(m, w, p)
    if kind == GammaKind.Vv:
        # the printed statement carries +κ on the mixed term; the brackets force -κ
        sign = 1.0 if printed else -1.0
        return [s2 * (b.hv ** 2).sum((0, 1)), s2 * (n - 2) * (b.gv ** 2).sum(0),
                sign * kappa * (b.gv * b.gh).sum(0)]
    if kind == GammaKind.VH:
        return [s2 * (b.hv * b.hvh).sum((0, 1)), s2 * 0.5 * (n - 1) * (b.gv * b.gh).sum(0),
                -s2 * (b.hvx * b.gv).sum(0), 0.5 * kappa * b.curvature(b.gv, b.gv),
                -0.5 * kappa * (b.gh ** 2).sum(0)]
    if kind == GammaKind.HH:
        return [s2 * (b.hvh ** 2).sum((0, 1)), s2 * (b.gh ** 2).sum(0),
                -2 * s2 * (b.hvx * b.gh).sum(0), kappa * b.curvature(b.gv, b.gh)]
    if kind == GammaKind.Xi:
        trace = np.einsum("ii...->...", b.hvh)
        return [s2 * (b.hvx ** 2).sum(0), s2 * (n - 1) * b.xi ** 2, 2 * s2 * trace * b.xi]
    r = range(1, n)
    lap = sum(w(V(i), V(i)) for i in r)
    lap_vh = sum(w(V(i), H(i)) for i in r)
    grad_lap = np.stack([sum(w(V(k), V(i), V(i)) for i in r) for k in r])
    if kind == GammaKind.SigmaV:
        return [s2 * (grad_lap ** 2).sum(0), -(n - 1) * kappa * lap * b.xi,
                -2 * kappa * lap * lap_vh]
    if kind == GammaKind.SigmaVXi:
        return [0.5 * s2 * (n - 1) * lap * b.xi, s2 * lap * lap_vh,
                s2 * (grad_lap * b.hvx).sum(0), -0.5 * (n - 1) * kappa * b.xi ** 2,
                -kappa * lap_vh * b.xi]
    raise ValueError(f"unknown kind {kind!r}")


def iterated_terms(kind, method: str, m: ModelManifold, sigma: float, kappa: float, f,
                   p: FramePoint, g=None, printed: bool = False) -> list[np.ndarray]:
    """Summands of the iterated form; their sum is the value."""
    kind = _as_kind(kind)
    if method == "definitional":
        wf, wg = _caches(m, f, g, p)
        return _definitional_terms(kind, m, sigma, kappa, wf, wg)
    if method == "closed":
        if g is not None and g is not f:
            raise ValueError("closed forms are quadratic; pass g=None")
        return _closed_terms(kind, m, sigma, kappa, WordCache(m, f, p.coords), p, printed)
    raise ValueError(f"unknown method {method!r}")


def gamma2(kind, method: str, m: ModelManifold, sigma: float, kappa: float, f,
           p: FramePoint, g=None, printed: bool = False) -> np.ndarray:
    """Γ₂ of kind Vv, VH, HH or Xi, either definitionally or in closed form.

    ``printed=True`` evaluates the Vv closed form with the opposite sign on
    its κ term, kept only to demonstrate that variant's failure.
    """
    kind = _as_kind(kind)
    if kind.is_sigma:
        raise ValueError("use sigma2 for the Σ kinds")
    return sum(iterated_terms(kind, method, m, sigma, kappa, f, p, g, printed))


def sigma2(kind, method: str, m: ModelManifold, sigma: float, kappa: float, f,
           p: FramePoint) -> np.ndarray:
    kind = _as_kind(kind)
    if not kind.is_sigma:
        raise ValueError("sigma2 takes SigmaV or SigmaVXi")
    return sum(iterated_terms(kind, method, m, sigma, kappa, f, p))


# -- tensors -------------------------------------------------------------------------------------

@dataclass(frozen=True)
class TensorCoefficients:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) <= 0:
            raise ValueError("tensor coefficients must be positive")

    @property
    def nonnegative(self) -> bool:
        """Whether ``b² < ac``, which makes T a nonnegative form."""
        return self.b ** 2 < self.a * self.c

    @property
    def weights(self) -> dict[GammaKind, float]:
        return {GammaKind.Vv: self.a, GammaKind.VH: -2 * self.b,
                GammaKind.HH: self.c, GammaKind.Xi: self.d}


def _warn_if_indefinite(coeffs: TensorCoefficients):
    if not coeffs.nonnegative:
        warnings.warn("b² >= ac: T is not guaranteed nonnegative", RuntimeWarning, stacklevel=3)


def tensor_T(coeffs: TensorCoefficients, m: ModelManifold, f, p: FramePoint, g=None):
    _warn_if_indefinite(coeffs)
    return sum(wt * gamma(k, m, f, f if g is None else g, p) for k, wt in coeffs.weights.items())


def tensor_T2(coeffs: TensorCoefficients, m: ModelManifold, sigma: float, kappa: float, f,
              p: FramePoint, method: str = "closed"):
    _warn_if_indefinite(coeffs)
    return sum(wt * gamma2(k, method, m, sigma, kappa, f, p) for k, wt in coeffs.weights.items())


# -- Bakry-Émery slacks -------------------------------------------------------------------------------

@dataclass
class BakryEmerySlack:
    s1: np.ndarray       # gradient inequality slack
    s2: np.ndarray       # T₂ >= ρT - KΓ slack
    scale1: np.ndarray
    scale2: np.ndarray
    gamma: np.ndarray    # Γ(f) = (σ²/2) Γᵛ(f)

    def ok(self, tol: float = 1e-7) -> bool:
        return bool(np.all(self.s1 >= -tol * self.scale1) and np.all(self.s2 >= -tol * self.scale2))

    @property
    def worst_relative(self) -> float:
        return float(min((self.s1 / self.scale1).min(), (self.s2 / self.scale2).min()))


def check_bakry_emery(cs, m: ModelManifold, sigma: float, kappa: float, f,
                      p: FramePoint) -> BakryEmerySlack:
    """Pointwise slacks of the gradient inequality and of ``T₂ >= ρT - KΓ``.

    ``cs`` is a :class:`~hypokinetic.constants.CoefficientSet`; its ``K_gradient``
    is the constant in front of ``‖∇ᵛf‖²`` and ``rho_certified``/``K_certified``
    the pair used for the tensor inequality.
    """
    P = cs.params
    if m.curvature_bound > P.M * (1 + 1e-12) + 1e-15:
        raise ValueError(f"manifold curvature bound {m.curvature_bound} exceeds M = {P.M}")
    if m.n != P.n or not np.isclose(sigma, P.sigma) or not np.isclose(kappa, P.kappa):
        raise ValueError("coefficient set was built for different (sigma, kappa, n)")
    w = WordCache(m, f, p.coords)
    parts = {k: sum(_closed_terms(k, m, sigma, kappa, w, p)) for k in GAMMA_KINDS}
    g_v = gamma(GammaKind.Vv, m, f, f, p)
    g_vh = gamma(GammaKind.VH, m, f, f, p)
    g_h = gamma(GammaKind.HH, m, f, f, p)
    g_x = gamma(GammaKind.Xi, m, f, f, p)
    t2_terms = [cs.a * parts[GammaKind.Vv], -2 * cs.b * parts[GammaKind.VH],
                cs.c * parts[GammaKind.HH], cs.d * parts[GammaKind.Xi]]
    t2 = sum(t2_terms)
    s1_terms = t2_terms + [cs.K_gradient * g_v, -g_h]
    T_terms = [cs.a * g_v, -2 * cs.b * g_vh, cs.c * g_h, cs.d * g_x]
    Gam = 0.5 * sigma ** 2 * g_v
    rho, K = cs.rho_certified, cs.K_certified
    s2_terms = [t2, -rho * sum(T_terms), K * Gam]
    return BakryEmerySlack(sum(s1_terms), sum(s2_terms), _scale(s1_terms),
                           _scale(s2_terms + [rho * t for t in T_terms]), Gam)


# -- batch certification --------------------------------------------------------------------------------

@dataclass
class IdentityReport:
    kind: str
    manifold: str
    samples: int
    worst_relative: float
    tol: float
    failing_samples: list[int]

    @property
    def passed(self) -> bool:
        return self.worst_relative <= self.tol

    def to_record(self) -> dict:
        return {"kind": self.kind, "manifold": self.manifold, "samples": self.samples,
                "worst_relative": self.worst_relative, "tol": self.tol,
                "failing_samples": self.failing_samples, "passed": self.passed}


def sample_pairs(m: ModelManifold, count: int, seed: int):
    """``count`` seeded (function, point) pairs, paired elementwise."""
    from .geometry import random_frame_points
    return battery(m, count, seed=seed), random_frame_points(m, seed, count)


def certify_identities(m: ModelManifold, kinds=GAMMA_KINDS + SIGMA_KINDS, count: int = 50,
                       seed: int = 0, sigma: float = 1.3, kappa: float = 0.7,
                       tol: float = 1e-7, printed: bool = False) -> list[IdentityReport]:
    """Compare definitional and closed evaluations on seeded pairs."""
    fs, ps = sample_pairs(m, count, seed)
    wf = WordCache(m, fs, ps.coords)
    reports = []
    for kind in map(_as_kind, kinds):
        dterms = _definitional_terms(kind, m, sigma, kappa, wf, wf)
        cterms = _closed_terms(kind, m, sigma, kappa, wf, ps, printed)
        rel = np.abs(sum(dterms) - sum(cterms)) / _scale(list(dterms) + list(cterms))
        rel = np.broadcast_to(rel, (count,))
        reports.append(IdentityReport(kind.value, m.spec(), count, float(rel.max()), tol,
                                      [int(i) for i in np.flatnonzero(rel > tol)]))
    return reports


def certify_bakry_emery(cs, m: ModelManifold, count: int = 200, seed: int = 0,
                        tol: float = 1e-7) -> dict:
    fs, ps = sample_pairs(m, count, seed)
    P = cs.params
    slack = check_bakry_emery(cs, m, P.sigma, P.kappa, fs, ps)
    rel1 = slack.s1 / slack.scale1
    rel2 = slack.s2 / slack.scale2
    return {"manifold": m.spec(), "eps": cs.eps, "eps_prime": cs.eps_prime,
            "scheme": cs.scheme, "samples": count, "min_rel_slack_gradient": float(rel1.min()),
            "min_rel_slack_tensor": float(rel2.min()), "tol": tol,
            "failing_samples": [int(i) for i in np.flatnonzero((rel1 < -tol) | (rel2 < -tol))],
            "passed": bool(rel1.min() >= -tol and rel2.min() >= -tol)}
