"""Model manifolds, orthonormal frames and the vertical/horizontal fields.

Frame-bundle points are stored in ambient chart coordinates ``(x, e)`` where the
rows of ``e`` are the frame vectors ``e^0 .. e^{n-1}`` in chart components.  The
flat ``coords`` layout is ``concatenate([x, e.ravel()])``.

Vector fields act on *point jets*: a :class:`~hypokinetic.diffengine.Jet` with
batch shape ``(*B, n + n*n)``.  A word ``X_1 ... X_m`` applied to ``f`` is the
mixed derivative ``d^m/dt_1..dt_m f(flow_m(t_m) o ... o flow_1(t_1) p)`` at 0,
read off the multilinear Taylor coefficient, so the result is exact up to
rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .diffengine import Jet, JetAlgebra, concatenate, multilinear_index, seed_point, stack

SPHERE_POLE_GUARD = 0.1   # resample sphere frames with sin(theta) below this
CHART_EPS = 1e-8


class DomainError(ValueError):
    pass


class WordLengthError(ValueError):
    pass


# -- manifolds ------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelManifold:
    kind: str                 # "euclidean" | "flat-torus" | "sphere2"
    n: int
    side_length: float = 1.0
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "flat-torus", "sphere2"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("base dimension must be >= 2")
        if self.kind == "sphere2" and self.n != 2:
            raise ValueError("sphere base is supported for n = 2 only")
        if self.side_length <= 0 or self.radius <= 0:
            raise ValueError("side_length and radius must be positive")

    @classmethod
    def euclidean(cls, n: int) -> "ModelManifold":
        return cls("euclidean", n)

    @classmethod
    def flat_torus(cls, n: int, side_length: float = 1.0) -> "ModelManifold":
        return cls("flat-torus", n, side_length=side_length)

    @classmethod
    def sphere2(cls, radius: float = 1.0) -> "ModelManifold":
        return cls("sphere2", 2, radius=radius)

    @classmethod
    def parse(cls, text: str) -> "ModelManifold":
        """Parse ``euclidean:N``, ``flat-torus:N:L`` or ``sphere2:R``."""
        parts = text.strip().split(":")
        try:
            if parts[0] == "euclidean" and len(parts) == 2:
                return cls.euclidean(int(parts[1]))
            if parts[0] == "flat-torus" and len(parts) in (2, 3):
                return cls.flat_torus(int(parts[1]), float(parts[2]) if len(parts) == 3 else 1.0)
            if parts[0] == "sphere2" and len(parts) in (1, 2):
                return cls.sphere2(float(parts[1]) if len(parts) == 2 else 1.0)
        except ValueError as exc:
            raise ValueError(f"bad manifold spec {text!r}: {exc}") from None
        raise ValueError(f"bad manifold spec {text!r}")

    def spec(self) -> str:
        if self.kind == "euclidean":
            return f"euclidean:{self.n}"
        if self.kind == "flat-torus":
            return f"flat-torus:{self.n}:{self.side_length:g}"
        return f"sphere2:{self.radius:g}"

    @property
    def flat(self) -> bool:
        return self.kind != "sphere2"

    @property
    def curvature_bound(self) -> float:
        return 0.0 if self.flat else 1.0 / self.radius ** 2

    @property
    def sectional_curvature(self) -> float:
        return self.curvature_bound

    @property
    def ambient_dim(self) -> int:
        return self.n + self.n * self.n


@dataclass(frozen=True)
class FramePoint:
    """Point of the orthonormal frame bundle; arrays may carry batch axes."""
    x: np.ndarray   # (*B, n)
    e: np.ndarray   # (*B, n, n), rows are frame vectors

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "e", np.asarray(self.e, dtype=float))

    @property
    def n(self) -> int:
        return self.x.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.x.shape[:-1]

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.x, self.e.reshape(self.batch_shape + (-1,))], axis=-1)

    @property
    def e0(self) -> np.ndarray:
        return self.e[..., 0, :]

    @classmethod
    def from_coords(cls, coords, n: int) -> "FramePoint":
        coords = np.asarray(coords, dtype=float)
        return cls(coords[..., :n], coords[..., n:].reshape(coords.shape[:-1] + (n, n)))

    def __getitem__(self, idx) -> "FramePoint":
        return FramePoint(self.x[idx], self.e[idx])

    def reduced(self, m: ModelManifold) -> "FramePoint":
        """Base coordinates reduced modulo the lattice (torus only)."""
        if m.kind == "flat-torus":
            return FramePoint(np.mod(self.x, m.side_length), self.e)
        return self


class FieldId(NamedTuple):
    kind: str    # "V" or "H"
    index: int

    def __repr__(self):
        return f"{self.kind}{self.index}"


def V(i: int) -> FieldId:
    return FieldId("V", i)


def H(i: int) -> FieldId:
    return FieldId("H", i)


def check_field(m: ModelManifold, fid: FieldId):
    if fid.kind == "V" and 1 <= fid.index <= m.n - 1:
        return
    if fid.kind == "H" and 0 <= fid.index <= m.n - 1:
        return
    raise ValueError(f"field {fid!r} out of range for n = {m.n}")


# -- metric and connection ------------------------------------------------------------

def metric(m: ModelManifold, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.broadcast_to(np.eye(m.n), x.shape[:-1] + (m.n, m.n)).copy()
    if m.kind == "sphere2":
        g[..., 0, 0] = m.radius ** 2
        g[..., 1, 1] = (m.radius * np.sin(x[..., 0])) ** 2
    return g


def _check_chart(m: ModelManifold, x):
    if m.kind == "sphere2":
        s = np.abs(np.sin(np.asarray(x, dtype=float)[..., 0]))
        if np.any(s < CHART_EPS):
            raise DomainError("sphere chart excludes the poles (sin(theta) = 0)")


def christoffel_jet(m: ModelManifold, x: Jet) -> Jet | None:
    """Christoffel symbols ``G[..., l, i, j]`` as a jet; ``None`` for flat charts."""
    if m.flat:
        return None
    _check_chart(m, x.value)
    th = x[..., 0]
    s, c = th.sin(), th.cos()
    zero = th * 0.0
    g0_11 = -(s * c)
    g1_01 = c / s
    rows = [
        [[zero, zero], [zero, g0_11]],
        [[zero, g1_01], [g1_01, zero]],
    ]
    return stack([stack([stack(r_ij, -1) for r_ij in r_i], -2) for r_i in rows], -3)


def christoffel(m: ModelManifold, x) -> np.ndarray:
    """Levi-Civita Christoffel symbols ``G[l, i, j]`` at chart point ``x``."""
    x = np.asarray(x, dtype=float)
    _check_chart(m, x)
    if m.flat:
        return np.zeros(x.shape[:-1] + (m.n,) * 3)
    alg = JetAlgebra.standard(1, 0)
    return christoffel_jet(m, Jet.constant(alg, x)).value


def riemann_chart(m: ModelManifold, x) -> np.ndarray:
    """``R[..., l, i, j, k]`` with ``R(d_i, d_j) d_k = R^l_{ijk} d_l``."""
    x = np.asarray(x, dtype=float)
    n = m.n
    out_shape = x.shape[:-1] + (n,) * 4
    if m.flat:
        return np.zeros(out_shape)
    alg = JetAlgebra.standard(n, 1)
    xj = seed_point(x, list(range(n)), 1, alg)
    G = christoffel_jet(m, xj)
    val = G.value                                  # (*B, l, i, j)
    dG = np.stack([G.coefficient(tuple(int(a == d) for a in range(n))) for d in range(n)],
                  axis=-1)                         # (*B, l, i, j, d) = d_d G^l_ij
    # R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
    term1 = np.einsum("...ljki->...lijk", dG)
    term2 = np.einsum("...likj->...lijk", dG)
    term3 = np.einsum("...lim,...mjk->...lijk", val, val)
    term4 = np.einsum("...ljm,...mik->...lijk", val, val)
    return term1 - term2 + term3 - term4


def riemann_frame(m: ModelManifold, p: FramePoint) -> np.ndarray:
    """Full frame array ``Rf[..., i, j, k, l] = <R(e^i, e^j) e^k, e^l>``."""
    n = m.n
    if m.flat:
        return np.zeros(p.batch_shape + (n,) * 4)
    R = riemann_chart(m, p.x)
    g = metric(m, p.x)
    e = p.e
    return np.einsum("...ls,...lijk,...ai,...bj,...ck,...ds->...abcd", g, R, e, e, e, e)


def riemann_component(m: ModelManifold, p: FramePoint, i: int, j: int, k: int, l: int):
    n = m.n
    for idx in (i, j, k, l):
        if not 0 <= idx < n:
            raise IndexError(f"frame index {idx} out of range 0..{n - 1}")
    return riemann_frame(m, p)[..., i, j, k, l]


# -- vector fields on point jets --------------------------------------------------------

def field_on_jet(m: ModelManifold, fid: FieldId, q: Jet) -> Jet:
    """Components of the field ``fid`` at the point jet ``q`` (batch ``(*B, N)``)."""
    n = m.n
    x = q[..., :n]
    e = q[..., n:].reshape(q.shape[:-1] + (n, n))
    zero_x = x * 0.0
    if fid.kind == "V":
        i = fid.index
        rows = []
        for r in range(n):
            if r == 0:
                rows.append(e[..., i, :])
            elif r == i:
                rows.append(-e[..., 0, :])
            else:
                rows.append(e[..., r, :] * 0.0)
        de = stack(rows, -2).reshape(q.shape[:-1] + (n * n,))
        return concatenate([zero_x, de], -1)
    a = fid.index
    dx = e[..., a, :]
    G = christoffel_jet(m, x)
    if G is None:
        de = (e * 0.0).reshape(q.shape[:-1] + (n * n,))
    else:
        # de^j_l = - G^l_{k m} e^a_k e^j_m
        ea = e[..., a, :]
        Gk = (G * ea.expand_dims(-1).expand_dims(-3)).sum(-2)          # (*B, l, m)
        de = -(Gk.expand_dims(-3) * e.expand_dims(-2)).sum(-1)         # (*B, j, l)
        de = de.reshape(q.shape[:-1] + (n * n,))
    return concatenate([dx, de], -1)


def flowed_point_jet(m: ModelManifold, word: Sequence[FieldId], coords) -> Jet:
    """Point jet after first-order flows along ``word[0]``, then ``word[1]``, ..."""
    L = len(word)
    if L > 4:
        raise WordLengthError(f"words of length {L} > 4 are not supported")
    for fid in word:
        check_field(m, fid)
    alg = JetAlgebra.nested(2, 2, 2, 2) if L == 4 else JetAlgebra.standard(L, L)
    q = Jet.constant(alg, np.asarray(coords, dtype=float))
    for k, fid in enumerate(word):
        q = q + Jet.variable(alg, k) * field_on_jet(m, fid, q)
    return q


def word_value(m: ModelManifold, word: Sequence[FieldId], f, coords) -> np.ndarray:
    """``(X_1 ... X_m f)`` at ambient ``coords`` (batched, broadcast against ``f``)."""
    coords = np.asarray(coords, dtype=float)
    n = m.n
    if len(word) == 0:
        return f.evaluate(coords[..., :n], coords[..., n:2 * n])
    q = flowed_point_jet(m, word, coords)
    fj = f.on_point_jet(q, n)
    return fj.coeffs[multilinear_index(q.algebra)]


def apply_word(m: ModelManifold, word: Sequence[FieldId], f, p: FramePoint) -> np.ndarray:
    """``X_1 X_2 ... X_m (f o pi)`` at ``p``; ``word = []`` gives ``f(p)``."""
    return word_value(m, tuple(word), f, p.coords)


class WordCache:
    """Memoised word values for one function batch at one point batch."""

    def __init__(self, m: ModelManifold, f, coords):
        self.m = m
        self.f = f
        self.coords = np.asarray(coords, dtype=float)
        self._cache: dict[tuple, np.ndarray] = {}

    def __call__(self, *word: FieldId) -> np.ndarray:
        key = tuple(word)
        if key not in self._cache:
            self._cache[key] = word_value(self.m, key, self.f, self.coords)
        return self._cache[key]


# -- brackets -----------------------------------------------------------------------------

@dataclass
class BracketReport:
    manifold: str
    tol: float
    max_vh: float          # [V_i, H_0] f - H_i f
    max_vvh: float         # [V_j, [V_i, H_0]] f + delta_ij H_0 f
    max_hh: float          # [H_0, H_i] f - sum_j <R(e^i,e^0)e^0,e^j> V_j f
    points: int
    functions: int

    @property
    def max_residual(self) -> float:
        return max(self.max_vh, self.max_vvh, self.max_hh)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def to_record(self) -> dict:
        return {"manifold": self.manifold, "tol": self.tol, "max_vh": self.max_vh,
                "max_vvh": self.max_vvh, "max_hh": self.max_hh,
                "max_residual": self.max_residual, "passed": self.passed,
                "points": self.points, "functions": self.functions}


def bracket_residuals(m: ModelManifold, p: FramePoint, functions) -> dict[str, np.ndarray]:
    """Residual arrays of the three bracket relations, shape ``(*F, *B, ...)``."""
    n = m.n
    f = functions.reshape_batch(*functions.batch_shape, *([1] * len(p.batch_shape))) \
        if functions.batch_shape else functions
    w = WordCache(m, f, p.coords)
    Rf = riemann_frame(m, p)
    vh, vvh, hh = [], [], []
    for i in range(1, n):
        vh.append(w(V(i), H(0)) - w(H(0), V(i)) - w(H(i)))
        curv = sum(Rf[..., i, 0, 0, j] * w(V(j)) for j in range(1, n))
        hh.append(w(H(0), H(i)) - w(H(i), H(0)) - curv)
        for j in range(1, n):
            lhs = (w(V(j), V(i), H(0)) - w(V(j), H(0), V(i))
                   - w(V(i), H(0), V(j)) + w(H(0), V(i), V(j)))
            vvh.append(lhs + (i == j) * w(H(0)))
    return {"vh": np.stack(vh), "vvh": np.stack(vvh), "hh": np.stack(hh)}


def verify_brackets(m: ModelManifold, p: FramePoint, tol: float = 1e-8,
                    functions=None, battery_seed: int = 0) -> BracketReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    if functions is None:
        from .testfunctions import battery
        functions = battery(m, 20, seed=battery_seed)
    res = bracket_residuals(m, p, functions)
    npts = int(np.prod(p.batch_shape)) if p.batch_shape else 1
    return BracketReport(m.spec(), tol, float(np.abs(res["vh"]).max()),
                         float(np.abs(res["vvh"]).max()), float(np.abs(res["hh"]).max()),
                         npts, len(functions))


# -- frames, sampling and the sphere group representation -----------------------------------

def gram_schmidt(vectors, g) -> np.ndarray:
    """Metric Gram-Schmidt of the rows of ``vectors`` (row order preserved)."""
    vecs = np.array(vectors, dtype=float)
    out = np.empty_like(vecs)
    for i in range(vecs.shape[-2]):
        v = vecs[..., i, :]
        for j in range(i):
            u = out[..., j, :]
            v = v - np.einsum("...a,...ab,...b->...", v, g, u)[..., None] * u
        norm = np.sqrt(np.einsum("...a,...ab,...b->...", v, g, v))
        out[..., i, :] = v / norm[..., None]
    return out


def orthonormality_defect(m: ModelManifold, p: FramePoint) -> np.ndarray:
    g = metric(m, p.x)
    gram = np.einsum("...ia,...ab,...jb->...ij", p.e, g, p.e)
    return np.abs(gram - np.eye(m.n)).max(axis=(-2, -1))


def _sphere_embedding_basis(r: float, th, ph):
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    X = r * np.stack([st * cp, st * sp, ct], -1)
    dth = r * np.stack([ct * cp, ct * sp, -st], -1)
    dph = r * np.stack([-st * sp, st * cp, np.zeros_like(st)], -1)
    return X, dth, dph


def frame_to_group(m: ModelManifold, p: FramePoint) -> np.ndarray:
    """3x3 orthogonal matrix with columns ``(x / r, e^0, e^1)`` in R^3."""
    if m.kind != "sphere2":
        raise ValueError("group representation exists for sphere2 only")
    r = m.radius
    X, dth, dph = _sphere_embedding_basis(r, p.x[..., 0], p.x[..., 1])
    cols = [X / r]
    for a in range(2):
        ea = p.e[..., a, :]
        cols.append(ea[..., 0:1] * dth + ea[..., 1:2] * dph)
    return np.stack(cols, -1)


def group_to_frame(m: ModelManifold, R) -> FramePoint:
    if m.kind != "sphere2":
        raise ValueError("group representation exists for sphere2 only")
    R = np.asarray(R, dtype=float)
    r = m.radius
    u = R[..., :, 0]
    th = np.arccos(np.clip(u[..., 2], -1.0, 1.0))
    ph = np.arctan2(u[..., 1], u[..., 0])
    _, dth, dph = _sphere_embedding_basis(r, th, ph)
    st2 = np.sin(th) ** 2
    rows = []
    for a in (1, 2):
        v = R[..., :, a]
        rows.append(np.stack([(v * dth).sum(-1) / r ** 2,
                              (v * dph).sum(-1) / (r ** 2 * st2)], -1))
    return FramePoint(np.stack([th, ph], -1), np.stack(rows, -2))


def haar_rotation(rng: np.random.Generator, size=()) -> np.ndarray:
    """Haar-distributed rotation matrices via sign-corrected QR."""
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    Z = rng.normal(size=shape + (3, 3))
    Q, Rm = np.linalg.qr(Z)
    d = np.sign(np.diagonal(Rm, axis1=-2, axis2=-1))
    Q = Q * d[..., None, :]
    det = np.linalg.det(Q)
    Q[..., :, 2] *= det[..., None]
    return Q


def random_frame_point(m: ModelManifold, rng: np.random.Generator, size: int | None = None) -> FramePoint:
    """Seeded random frame point (``size`` of them, stacked, if given)."""
    if size is not None:
        pts = [random_frame_point(m, rng) for _ in range(size)]
        return FramePoint(np.stack([p.x for p in pts]), np.stack([p.e for p in pts]))
    n = m.n
    if m.kind == "sphere2":
        while True:
            R = haar_rotation(rng)
            p = group_to_frame(m, R)
            if np.sin(p.x[0]) >= SPHERE_POLE_GUARD:
                return p
    scale = m.side_length if m.kind == "flat-torus" else 1.0
    x = rng.uniform(0.0, scale, size=n)
    g = metric(m, x)
    while True:
        A = rng.normal(size=(n, n))
        if abs(np.linalg.det(A)) >= 1e-9:
            return FramePoint(x, gram_schmidt(A, g))


def random_frame_points(m: ModelManifold, seed: int, count: int) -> FramePoint:
    return random_frame_point(m, np.random.default_rng(seed), size=count)


def left_translate(m: ModelManifold, p: FramePoint, Q) -> FramePoint:
    """Apply the ambient rotation ``Q`` to a sphere frame point."""
    return group_to_frame(m, np.asarray(Q) @ frame_to_group(m, p))
