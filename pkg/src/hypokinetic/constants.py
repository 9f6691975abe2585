"""Hypocoercive coefficient construction, rates and the regularization scheme.

The generator is ``L = (σ²/2) Δᵛ + κ ξ`` on the unit tangent bundle of a
manifold with curvature bound ``M``.  Coefficients ``(a, b, c, d)`` of the
twisted tensor ``T = a‖∇ᵛf‖² - 2b<∇ᵛf, ∇^h̃f> + c‖∇^h̃f‖² + d‖∇^ξf‖²`` are
produced by a chain of Young-inequality parameter choices driven by two free
parameters ``eps`` in (0, 1) and ``eps_prime`` > 0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize

SCHEMES = ("chain", "corrected")
EQ_RTOL = 1e-12


class ConstraintError(ValueError):
    pass


class DegenerateRateError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemParams:
    sigma: float
    kappa: float
    n: int
    M: float = 0.0
    lam: float | None = None     # Poincaré constant, only needed for rates

    def __post_init__(self):
        if self.sigma <= 0 or self.kappa <= 0:
            raise ValueError("sigma and kappa must be positive")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        if self.M < 0:
            raise ValueError("curvature bound M must be nonnegative")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("Poincaré constant must be positive")

    @classmethod
    def for_manifold(cls, m, sigma: float, kappa: float, lam: float | None = None):
        return cls(sigma, kappa, m.n, m.curvature_bound, lam)


@dataclass(frozen=True)
class CoefficientSet:
    params: ProblemParams
    scheme: str
    eps: float
    eps_prime: float
    a: float
    b: float
    c: float
    d: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    eps5: float | None
    eps6: float
    eps_dprime: float
    Cv: float
    Ch: float            # gradient coefficient implied by the Young bounds
    Ch_printed: float    # same coefficient with the printed "c" in place of "c σ²/2"
    Cxi: float
    A: float
    B: float
    C: float
    D: float

    # rate constants as stated, assuming unit gradient coefficients
    @property
    def rho(self) -> float:
        return 1.0 / max(self.b + self.c, self.d)

    @property
    def K(self) -> float:
        return (-self.Cv + (self.a + self.b) / max(self.b + self.c, self.d)) * 2 / self.params.sigma ** 2

    # constants that hold with the actual gradient coefficients
    @property
    def rho_certified(self) -> float:
        return min(self.Ch, self.Cxi) / max(self.b + self.c, self.d)

    @property
    def K_certified(self) -> float:
        return (-self.Cv + self.rho_certified * (self.a + self.b)) * 2 / self.params.sigma ** 2

    @property
    def K_gradient(self) -> float:
        """Constant ``K`` of ``T₂ >= -K‖∇ᵛf‖² + ‖∇^h̃f‖²``."""
        return -self.Cv

    @property
    def tensor(self):
        from .gamma import TensorCoefficients
        return TensorCoefficients(self.a, self.b, self.c, self.d)

    def with_b(self, b: float) -> "CoefficientSet":
        return replace(self, b=b)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["params"] = asdict(self.params)
        rec.update(rho=self.rho, K=self.K, rho_certified=self.rho_certified,
                   K_certified=self.K_certified, K_gradient=self.K_gradient)
        return rec


def _check_eps(eps: float, eps_prime: float):
    if not 0 < eps < 1:
        raise ConstraintError(f"eps must lie in (0, 1), got {eps}")
    if not eps_prime > 0:
        raise ConstraintError(f"eps_prime must be positive, got {eps_prime}")


def build_coefficients(params: ProblemParams, eps: float, eps_prime: float,
                       scheme: str = "chain") -> CoefficientSet:
    """Run the parameter-choice chain.

    ``scheme="chain"`` takes ``a = b²/(cε)`` literally.  ``scheme="corrected"``
    takes ``a = b²(2+ε)/(cε)``, the value for which the Hessian block
    discriminant ``B² <= AC`` holds with ``C`` as actually computed.
    """
    _check_eps(eps, eps_prime)
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    s2 = params.sigma ** 2
    k, n, M = params.kappa, params.n, params.M

    eps6 = (n - 1) * (2 + eps) / (2 * (1 + eps))
    eps4 = (1 + eps_prime) * (1 + eps)
    eps_dd = 0.25 / (1 + (n - 1) * eps / (4 * (1 + eps_prime)))
    b = (1 + 4 * (1 + eps_prime) / ((n - 1) * eps)) / k
    c = b * k * eps_dd / (0.5 * s2 * eps4)
    d = c / (1 + eps)
    a = b ** 2 / (c * eps)
    if scheme == "corrected":
        a *= 2 + eps
    eps3 = c * eps_prime / (eps4 * b)
    curv_scale = 0.5 * c * k * M   # may underflow to 0 for subnormal M
    eps5 = b * k * eps_dd / curv_scale if curv_scale > 0 else None
    eps2 = k * eps_dd / (0.25 * s2 * (n - 1))
    eps1 = b * k * eps_dd / (0.5 * a * k)

    curv_v = c * k * M / (2 * eps5) if eps5 is not None else 0.0
    curv_h = 0.5 * k * M * eps5 if eps5 is not None else 0.0
    Cv = (a * (0.5 * s2 * (n - 2) - k / (2 * eps1))
          - 2 * b * (0.5 * s2 * ((n - 1) / (4 * eps2) + 1 / (2 * eps3)) + 0.5 * k * M)
          - curv_v)
    common = -0.5 * a * k * eps1 + 2 * b * (0.5 * k - s2 * (n - 1) * eps2 / 8)
    Ch = common + c * (0.5 * s2 - 0.5 * s2 * eps4 - curv_h)
    Ch_printed = common - c * (-1 + 0.5 * s2 * eps4 + curv_h)
    Cxi = d * 0.5 * s2 * (n - 1 - eps6)
    A = 0.5 * s2 * a
    B = 0.5 * s2 * b
    C = 0.5 * s2 * (c - (n - 1) * d / eps6)
    D = 0.5 * s2 * (d - c / eps4 - b * eps3)
    return CoefficientSet(params, scheme, eps, eps_prime, a, b, c, d, eps1, eps2, eps3, eps4,
                          eps5, eps6, eps_dd, Cv, Ch, Ch_printed, Cxi, A, B, C, D)


def printed_summary(params: ProblemParams, eps: float, eps_prime: float) -> dict[str, float]:
    """The closed-form summary values of (a, b, c, d) as printed."""
    s2, k, n = params.sigma ** 2, params.kappa, params.n
    q = 1 + 4 * (1 + eps_prime) / ((n - 1) * eps)
    return {
        "a": s2 / (2 * k ** 2) * (n - 1) * q ** 2 * (1 + eps),
        "b": q / k,
        "c": 2 / s2 / (n - 1) * eps / (1 + eps),
        "d": 2 / s2 / (n - 1) * eps / (1 + eps) ** 2,
    }


def discrepancy_report(cs: CoefficientSet) -> dict:
    """Compare chain values with the printed summary; flags mismatching entries."""
    printed = printed_summary(cs.params, cs.eps, cs.eps_prime)
    out = {}
    for key, pv in printed.items():
        cv = getattr(cs, key)
        ratio = cv / pv
        out[key] = {"chain": cv, "printed": pv, "ratio": ratio,
                    "ratio_times_eps2": ratio * cs.eps ** 2,
                    "mismatch": not math.isclose(cv, pv, rel_tol=1e-9)}
    return out


# -- validation ----------------------------------------------------------------------------

@dataclass
class Constraint:
    name: str
    margin: float        # >= 0 (or > 0 for strict) means satisfied
    passed: bool
    kind: str            # "strict", "inequality", "equality"


@dataclass
class ConstraintReport:
    constraints: list[Constraint] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.constraints)

    @property
    def failures(self) -> list[str]:
        return [c.name for c in self.constraints if not c.passed]

    def __getitem__(self, name: str) -> Constraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_record(self) -> dict:
        return {"passed": self.passed, "failures": self.failures,
                "constraints": [asdict(c) for c in self.constraints]}


def validate_coefficients(cs: CoefficientSet) -> ConstraintReport:
    rep = ConstraintReport()

    def strict(name, margin):
        rep.constraints.append(Constraint(name, margin, margin > 0, "strict"))

    def ineq(name, lhs, rhs):
        # lhs <= rhs up to rounding
        margin = rhs - lhs
        scale = max(abs(lhs), abs(rhs), 1e-300)
        rep.constraints.append(Constraint(name, margin, margin >= -EQ_RTOL * scale, "inequality"))

    def eq(name, lhs, rhs, scale):
        margin = -abs(lhs - rhs)
        rep.constraints.append(Constraint(name, margin, -margin <= EQ_RTOL * scale, "equality"))

    a, b, c, e = cs.a, cs.b, cs.c, cs.eps
    strict("b^2 < ac", a * c - b * b)
    ineq("b^2 <= ac eps", b * b, a * c * e)
    for name in ("A", "B", "C"):
        ineq(f"{name} >= 0", 0.0, getattr(cs, name))
    eq("D = 0", cs.D, 0.0, 1 + abs(cs.A) + abs(cs.C))
    ineq("B^2 <= AC", cs.B ** 2, cs.A * cs.C)
    strict("Ch > 0", cs.Ch)
    strict("Cxi > 0", cs.Cxi)
    eq("Ch = 1", cs.Ch, 1.0, 1.0)
    eq("Cxi = 1", cs.Cxi, 1.0, 1.0)
    return rep


def chain_residuals(cs: CoefficientSet) -> dict[str, float]:
    """Relative residuals of every defining equality of the chain."""
    P = cs.params
    s2, k, n, M = P.sigma ** 2, P.kappa, P.n, P.M
    factor = (2 + cs.eps) if cs.scheme == "corrected" else 1.0

    def rel(x, y):
        return abs(x - y) / max(abs(x), abs(y))

    out = {
        "eps6": rel(cs.eps6, (n - 1) * (2 + cs.eps) / (2 * (1 + cs.eps))),
        "eps4": rel(cs.eps4, (1 + cs.eps_prime) * (1 + cs.eps)),
        "c": rel(cs.c * 0.5 * s2 * cs.eps4, cs.b * k * cs.eps_dprime),
        "d": rel(cs.d, cs.c / (1 + cs.eps)),
        "a": rel(cs.a, factor * cs.b ** 2 / (cs.c * cs.eps)),
        "eps3": rel(cs.b * cs.eps3, cs.c / cs.eps4 * cs.eps_prime),
        "eps2": rel(0.25 * s2 * (n - 1) * cs.eps2, k * cs.eps_dprime),
        "eps1": rel(0.5 * cs.a * k * cs.eps1, cs.b * k * cs.eps_dprime),
    }
    if cs.eps5 is not None:
        out["eps5"] = rel(cs.c * 0.5 * k * M * cs.eps5, cs.b * k * cs.eps_dprime)
    return out


# -- rates ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class RateReport:
    lam: float
    H1_constant: float
    lambda_hat: float
    eta: float
    lambda_tilde: float
    rho: float
    K: float

    def to_record(self) -> dict:
        return asdict(self)


def rate_report(cs: CoefficientSet, lam: float) -> RateReport:
    """Exponential rate ``ρ λ̂ / (K + λ̂)`` with the certified ``(ρ, K)``."""
    if lam <= 0:
        raise ValueError("Poincaré constant must be positive")
    root = 1 - math.sqrt(cs.eps)
    h1 = min(cs.a * root, cs.c * root, cs.d)
    lam_hat = lam * h1
    rho, K = cs.rho_certified, cs.K_certified
    if K + lam_hat <= 0:
        raise DegenerateRateError(f"K + lambda_hat = {K + lam_hat} <= 0")
    eta = lam_hat / (K + lam_hat)
    return RateReport(lam, h1, lam_hat, eta, rho * eta, rho, K)


@dataclass(frozen=True)
class SearchConfig:
    grid: int = 32
    eps_range: tuple[float, float] = (1e-3, 1 - 1e-3)
    eps_prime_range: tuple[float, float] = (1e-3, 1e2)
    iterations: int = 200
    scheme: str = "corrected"


@dataclass
class OptimizeResult:
    eps: float
    eps_prime: float
    report: RateReport
    coefficients: CoefficientSet
    grid_best: tuple[float, float, float]
    evaluations: int

    def to_record(self) -> dict:
        return {"eps": self.eps, "eps_prime": self.eps_prime, "rate": self.report.to_record(),
                "coefficients": self.coefficients.to_record(),
                "grid_best": list(self.grid_best), "evaluations": self.evaluations}


def _feasible_rate(params: ProblemParams, eps: float, eps_prime: float, scheme: str) -> float:
    try:
        cs = build_coefficients(params, eps, eps_prime, scheme)
        rep = validate_coefficients(cs)
        required = [c for c in rep.constraints if c.name not in ("Ch = 1", "Cxi = 1")]
        if not all(c.passed for c in required):
            return -math.inf
        return rate_report(cs, params.lam).lambda_tilde
    except (ConstraintError, DegenerateRateError):
        return -math.inf


def optimize_rate(params: ProblemParams, search: SearchConfig = SearchConfig()) -> OptimizeResult:
    """Maximise the certified rate over ``(eps, eps_prime)``: log grid, then Nelder-Mead."""
    if params.lam is None:
        raise ValueError("params.lam is required for rate optimisation")
    lo, hi = search.eps_range
    plo, phi = search.eps_prime_range
    eps_grid = np.geomspace(lo, hi, search.grid)
    ep_grid = np.geomspace(plo, phi, search.grid)
    best = (-math.inf, None, None)
    evals = 0
    for e in eps_grid:
        for ep in ep_grid:
            r = _feasible_rate(params, float(e), float(ep), search.scheme)
            evals += 1
            if r > best[0]:
                best = (r, float(e), float(ep))
    if not math.isfinite(best[0]):
        raise InfeasibleError("no feasible (eps, eps_prime) on the search grid")
    grid_best = (best[1], best[2], best[0])

    def objective(z):
        e, ep = math.exp(z[0]), math.exp(z[1])
        if not (lo <= e <= hi and plo <= ep <= phi):
            return math.inf
        return -_feasible_rate(params, e, ep, search.scheme)

    res = minimize(objective, x0=[math.log(best[1]), math.log(best[2])], method="Nelder-Mead",
                   options={"maxiter": search.iterations, "xatol": 1e-10, "fatol": 1e-14})
    evals += int(res.nfev)
    e, ep = math.exp(res.x[0]), math.exp(res.x[1])
    if -res.fun < best[0]:
        e, ep = best[1], best[2]
    cs = build_coefficients(params, e, ep, search.scheme)
    return OptimizeResult(e, ep, rate_report(cs, params.lam), cs, grid_best, evals)


def asymptotic_K(n: int, eps: float, eps_prime: float) -> float:
    """The closed-form large-σ constant ``K_{ε,ε'}`` as printed."""
    _check_eps(eps, eps_prime)
    q = 1 + 4 * (1 + eps_prime) / ((n - 1) * eps)
    inner = (n - 2 - (4 + eps ** 2 / eps_prime) * (1 + eps) * (1 + eps_prime) / eps
             - (n - 1) ** 2 / 16 * eps / ((1 + eps) * (1 + eps_prime)))
    return (n - 1) / 2 * q ** 2 * (1 + eps) * inner


def K_limit_sequence(n: int, eps: float, eps_prime: float, sigmas=(1e2, 1e3, 1e4),
                     scheme: str = "chain", certified: bool = False) -> list[float]:
    """``K`` along ``σ = κ`` (curvature bound 0) for the given σ values."""
    out = []
    for s in sigmas:
        cs = build_coefficients(ProblemParams(s, s, n, 0.0), eps, eps_prime, scheme)
        out.append(cs.K_certified if certified else cs.K)
    return out


def spectral_gap(m) -> float | None:
    """Poincaré constant of the unit tangent bundle when it is known in closed form."""
    if m.kind == "flat-torus":
        return min((2 * math.pi / m.side_length) ** 2, float(m.n - 1))
    return None


# -- regularization scheme -----------------------------------------------------------------------

@dataclass
class RegularizationSet:
    params: ProblemParams
    a: float
    b: float
    c: float
    rescale: float
    a_hat: float
    b_hat: float
    c_hat: float
    s_max: float
    a_tilde: float
    c_tilde: float
    grid: np.ndarray = field(repr=False)
    coefficients: Callable[[np.ndarray], dict] = field(repr=False)

    # s-dependent Young parameters
    def eps3(self, s): return self.c_hat * s ** 4 / (4 * self.b)
    def eps4(self, s): return 4 * self.c / (self.c_hat * s ** 2)
    def eps1(self, s): return self.b * s ** 2 / (2 * self.a)
    def eps13(self, s): return self.params.kappa * s / 8
    def eps7(self, s): return self.b_hat * s ** 2 / (2 * self.a_hat)
    def eps8(self, s):
        P = self.params
        return self.c * P.sigma ** 2 * s ** 2 / (4 * self.a_hat * P.kappa * (P.n - 1))
    def eps9(self, s): return s
    def eps10(self, s): return s
    def eps12(self, s): return (self.params.n - 1) * self.params.kappa * s / 12

    @property
    def eps2(self): return self.params.kappa / (2 * (self.params.n - 1))
    eps5 = 1.0
    eps6 = 1.0

    @property
    def eps11(self): return (self.params.n - 1) / 4

    @property
    def t0(self) -> float:
        return min(1.0, self.s_max)

    def conditions(self, s) -> dict[str, np.ndarray]:
        return regularization_conditions(self.coefficients(np.asarray(s, dtype=float)))

    def to_record(self) -> dict:
        return {"params": asdict(self.params), "a": self.a, "b": self.b, "c": self.c,
                "rescale": self.rescale, "a_hat": self.a_hat, "b_hat": self.b_hat,
                "c_hat": self.c_hat, "s_max": self.s_max, "t0": self.t0,
                "a_tilde": self.a_tilde, "c_tilde": self.c_tilde,
                "eps2": self.eps2, "eps5": self.eps5, "eps6": self.eps6, "eps11": self.eps11}


def regularization_coefficients(params: ProblemParams, a, b, c, a_hat, b_hat, c_hat, s):
    """Coefficient functions bounding ``dF_s/ds`` at the fixed Young parameters.

    Every entry is obtained by inserting the Young bounds of the Γ₂ and Σ₂
    forms into the derivative of ``F_s`` and collecting the coefficient of
    each gradient or Hessian block.
    """
    P = params
    s2, k, n, M = P.sigma ** 2, P.kappa, P.n, P.M
    s = np.asarray(s, dtype=float)
    e1 = b * s ** 2 / (2 * a)
    e2 = k / (2 * (n - 1))
    e3 = c_hat * s ** 4 / (4 * b)
    e4 = 4 * c / (c_hat * s ** 2)
    e5, e6 = 1.0, 1.0
    e7 = b_hat * s ** 2 / (2 * a_hat)
    e8 = c * s2 * s ** 2 / (4 * a_hat * k * (n - 1))
    e9 = e10 = s
    e11 = (n - 1) / 4
    e12 = (n - 1) * k * s / 12
    e13 = k * s / 8
    A = (-a * s ** 2 * s2
         + 4 * b_hat * s ** 6 * (n - 1) ** 2 * s2 / 8 * (1 / e9 + 2 / ((n - 1) * e10))
         + 4 * a_hat * s ** 3 * (n - 1)
         + 2 * a_hat * s ** 4 * (k * (n - 1) ** 2 / (2 * e7) + k * (n - 1) / e8)
         + 6 * b_hat * s ** 5 * (n - 1) / e12)
    B = -b * s ** 4 * s2
    C = (-c * s ** 6 * s2 + 2 * a_hat * s ** 4 * k * (n - 1) * e8
         + b_hat * s ** 6 * (n - 1) * e10 * s2 + 2 * b_hat * s ** 6 * k * (n - 1) / e11
         + c_hat * s ** 8 * s2 * (n - 1) / e6)
    A_hat = -a_hat * s ** 4 * s2
    B_hat = -b_hat * s ** 6 * s2
    C_hat = b * s ** 4 * s2 * e3 + c * s ** 6 * s2 / e4 - c_hat * s ** 8 * s2
    Cv = (-s2 + 2 * a * s - a * s ** 2 * s2 * (n - 2) + a * s ** 2 * k / e1 + 4 * b * s ** 3 / e13
          + 4 * b * s ** 4 * (s2 * (n - 1) / (8 * e2) + s2 / (4 * e3) + k * M / 2)
          + c * s ** 6 * k * M / e5)
    Ch = (a * s ** 2 * k * e1 + 4 * b * s ** 3 * e13 + 4 * b * s ** 4 * (s2 * (n - 1) * e2 / 8 - k / 2)
          + 6 * c * s ** 5 - 2 * c * s ** 6 * (s2 / 2 - s2 * e4 / 2 - k * M * e5 / 2))
    Cxi = (a_hat * s ** 4 * k * (n - 1) * e7 + 6 * b_hat * s ** 5 * e12 + 8 * c_hat * s ** 7
           - c_hat * s ** 8 * s2 * (n - 1 - e6)
           - 4 * b_hat * s ** 6 * ((n - 1) * k / 2 - (n - 1) * s2 * e9 / 8 - k * e11 / 2))
    return {"A": A, "B": B, "C": C, "A_hat": A_hat, "B_hat": B_hat, "C_hat": C_hat,
            "Cv": Cv, "Ch": Ch, "Cxi": Cxi}


def regularization_conditions(coef: dict) -> dict[str, np.ndarray]:
    """Boolean arrays for every sign and discriminant requirement."""
    out = {f"{k} <= 0": coef[k] <= 0 for k in
           ("A", "B", "C", "A_hat", "B_hat", "C_hat", "Cv", "Ch", "Cxi")}
    out["B^2 <= AC"] = coef["B"] ** 2 <= coef["A"] * coef["C"]
    out["B_hat^2 <= A_hat C_hat"] = coef["B_hat"] ** 2 <= coef["A_hat"] * coef["C_hat"]
    return out


def regularization_scheme(params: ProblemParams, a: float, b: float, c: float,
                          grid_points: int = 4000, s_min: float = 1e-6) -> RegularizationSet:
    if min(a, b, c) <= 0:
        raise ValueError("a, b, c must be positive")
    if not 4 * b * b < a * c:
        raise ConstraintError("regularization needs 4b² < ac")
    s2, k, n = params.sigma ** 2, params.kappa, params.n
    # joint rescaling so that 2a²κ/b = σ²/3 (the ratio 4b²/ac is scale free)
    lam = s2 * b / (6 * a * a * k)
    a, b, c = lam * a, lam * b, lam * c
    b_hat = c * s2 / (32 * k)
    a_hat = math.sqrt(0.5 * a * s2 / (2 * k * (n - 1) ** 2 / b_hat
                                      + 8 * k ** 2 * (n - 1) ** 2 / (c * s2)))
    # twice the smallest value meeting the three largeness requirements on ĉ
    c_hat = 2 * max(24 * c * c * s2 / (b * k), 2 * b_hat ** 2 / a_hat, 24 * b * b / s2)

    def coefficients(s):
        return regularization_coefficients(params, a, b, c, a_hat, b_hat, c_hat, s)

    grid = np.geomspace(s_min, 1.0, grid_points)
    conds = regularization_conditions(coefficients(grid))
    ok = np.logical_and.reduce(list(conds.values()))
    if not ok[0]:
        raise InfeasibleError("sign conditions fail already at the smallest grid step")
    bad = np.flatnonzero(~ok)
    s_max = float(grid[-1] if bad.size == 0 else grid[bad[0] - 1])
    theta_hat = 1 - b_hat / math.sqrt(a_hat * c_hat)
    a_tilde = 2 / a
    c_tilde = 2 / c + 1 / (theta_hat * c_hat)
    return RegularizationSet(params, a, b, c, lam, a_hat, b_hat, c_hat, s_max, a_tilde,
                             c_tilde, grid[grid <= s_max], coefficients)


def leading_order_fit(rs: RegularizationSet, key: str, power: int,
                      s_range=(1e-3, 1e-2), points: int = 50) -> float:
    """Least-squares coefficient of ``s**power`` in ``key``'s coefficient function."""
    s = np.geomspace(*s_range, points)
    y = rs.coefficients(s)[key]
    x = s ** power
    return float((x * y).sum() / (x * x).sum())
