"""Metric models: flat space, quadric hypersurfaces, warped products, custom charts.

Every model carries a single chart.  Points are chart coordinates as 1-d
numpy arrays.  ``metric_jet(p)`` returns the metric matrix ``g`` and its
coordinate derivatives ``dg[k, i, j] = d_k g_ij``; those derivatives are
exact (closed form or jet arithmetic), never finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .expr import Binary, Const, Expression, Unary, Var, eval_jet1, eval_jet2, parse

__all__ = [
    "GeometryError",
    "DomainError",
    "SingularMetricError",
    "ModelError",
    "Signature",
    "VectorType",
    "Chart",
    "MetricModel",
    "Flat",
    "Quadric",
    "Warped",
    "Custom",
    "inertia",
    "metric_at",
    "inverse_metric_at",
    "classify_vector",
    "quadric_embed",
    "restrict_linear",
    "orthonormal_frame",
    "sample_points",
]


class GeometryError(Exception):
    """Base class for numerical geometry failures."""


class DomainError(GeometryError):
    """A point lies outside the chart domain."""


class SingularMetricError(GeometryError):
    pass


class ModelError(GeometryError):
    """A model definition is inconsistent (signature, symmetry, domain)."""


@dataclass(frozen=True)
class Signature:
    r: int  # negative directions
    p: int  # positive directions

    def __post_init__(self):
        if self.r < 0 or self.p < 0:
            raise ValueError(f"invalid signature ({self.r}, {self.p})")

    @property
    def dim(self) -> int:
        return self.r + self.p

    def __iter__(self):
        return iter((self.r, self.p))


class VectorType(str, Enum):
    SPACELIKE = "spacelike"
    TIMELIKE = "timelike"
    NULL = "null"


def inertia(g: np.ndarray, rtol: float = 1e-12) -> tuple[int, int, int]:
    """(negative, zero, positive) eigenvalue counts of a symmetric matrix."""
    w = np.linalg.eigvalsh(0.5 * (g + g.T))
    cut = rtol * max(1.0, float(np.max(np.abs(w))))
    return int(np.sum(w < -cut)), int(np.sum(np.abs(w) <= cut)), int(np.sum(w > cut))


@dataclass(frozen=True)
class Chart:
    """Open coordinate box; quadrics also record the solved axis and branch."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    solved_axis: int | None = None
    branch: int = 1

    @property
    def dim(self) -> int:
        return len(self.lo)

    def __post_init__(self):
        object.__setattr__(self, "_lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "_hi", np.asarray(self.hi, dtype=float))

    def in_box(self, p: np.ndarray) -> bool:
        return bool((p > self._lo).all() and (p < self._hi).all())

    def sample_box(self, margin: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
        """Finite sub-box used for random sampling.

        Infinite sides are replaced by a window of width 6; each side is then
        pulled in by ``margin`` times the width.
        """
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for i, (a, b) in enumerate(zip(self.lo, self.hi)):
            if math.isinf(a) and math.isinf(b):
                a, b = -3.0, 3.0
            elif math.isinf(b):
                b = a + 6.0
            elif math.isinf(a):
                a = b - 6.0
            w = b - a
            lo[i] = a + margin * w
            hi[i] = b - margin * w
        return lo, hi


def _box(bounds, dim: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if bounds is None:
        return (-math.inf,) * dim, (math.inf,) * dim
    if len(bounds) != dim:
        raise ModelError(f"domain box has {len(bounds)} intervals, expected {dim}")
    lo, hi = [], []
    for a, b in bounds:
        a = -math.inf if a is None else float(a)
        b = math.inf if b is None else float(b)
        if not a < b:
            raise ModelError(f"empty interval ({a}, {b})")
        lo.append(a)
        hi.append(b)
    return tuple(lo), tuple(hi)


def _bounds_out(lo, hi) -> list[list[float | None]]:
    return [[None if math.isinf(a) else a, None if math.isinf(b) else b] for a, b in zip(lo, hi)]


class MetricModel:
    """Common interface of all metric models."""

    signature: Signature
    chart: Chart

    @property
    def dim(self) -> int:
        return self.signature.dim

    def metric_jet(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def metric(self, p: np.ndarray) -> np.ndarray:
        return self.metric_jet(p)[0]

    def inverse(self, p: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
        if g is None:
            g = self.metric(p)
        try:
            ginv = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            raise SingularMetricError(f"singular metric at {list(p)}") from None
        if not np.all(np.isfinite(ginv)):
            raise SingularMetricError(f"singular metric at {list(p)}")
        return ginv

    def valid(self, p: np.ndarray) -> bool:
        """Model-specific validity beyond the chart box (default: none)."""
        return True

    def in_domain(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return p.shape == (self.dim,) and self.chart.in_box(p) and self.valid(p)

    def check_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise DomainError(f"point has shape {p.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(p)):
            raise DomainError(f"non-finite point {list(p)}")
        if not self.in_domain(p):
            raise DomainError(f"point {list(p)} outside chart domain")
        return p

    def sample_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.chart.sample_box()

    def to_spec(self) -> dict:
        raise NotImplementedError


# --------------------------------------------------------------------------
# flat


class Flat(MetricModel):
    """Pseudo-Euclidean space with g = diag(-1 x r, +1 x p)."""

    def __init__(self, r: int, p: int, box=None):
        self.signature = Signature(r, p)
        n = r + p
        if n < 1:
            raise ModelError("flat model needs dimension >= 1")
        self.eta = np.array([-1.0] * r + [1.0] * p)
        self._g = np.diag(self.eta)
        self._dg = np.zeros((n, n, n))
        lo, hi = _box(box, n)
        self.chart = Chart(lo, hi)

    def metric_jet(self, p):
        return self._g, self._dg

    def inverse(self, p, g=None):
        return self._g

    def to_spec(self) -> dict:
        spec = {"type": "flat", "dimension": self.dim, "signature": list(self.signature)}
        if not all(math.isinf(x) for x in self.chart.lo + self.chart.hi):
            spec["domain"] = _bounds_out(self.chart.lo, self.chart.hi)
        return spec

    def __repr__(self) -> str:
        return f"Flat({self.signature.r}, {self.signature.p})"


# --------------------------------------------------------------------------
# quadric


class Quadric(MetricModel):
    """Level set sum_i eta_i x_i^2 = c in flat ambient space, in a graph chart.

    The chart solves ambient axis ``solved_axis`` for the branch with sign
    ``branch``; the chart coordinates are the remaining ambient coordinates
    in their original order.  The domain keeps the solved coordinate's
    square at least ``min_radicand * |c|``.
    """

    def __init__(
        self,
        ambient_signature: Sequence[int],
        level: float,
        solved_axis: int | None = None,
        branch: int = 1,
        box=None,
        min_radicand: float = 0.01,
    ):
        R, P = (int(x) for x in ambient_signature)
        self.ambient_signature = Signature(R, P)
        c = float(level)
        if c == 0.0 or not math.isfinite(c):
            raise ModelError("quadric level must be finite and nonzero")
        N = R + P
        if N < 2:
            raise ModelError("quadric ambient dimension must be >= 2")
        if c > 0:
            if P < 1:
                raise ModelError("positive level needs a positive ambient direction")
            self.signature = Signature(R, P - 1)
        else:
            if R < 1:
                raise ModelError("negative level needs a negative ambient direction")
            self.signature = Signature(R - 1, P)
        self.level = c
        self.ambient_eta = np.array([-1.0] * R + [1.0] * P)
        if solved_axis is None:
            solved_axis = N - 1 if c > 0 else 0
        if not 0 <= solved_axis < N:
            raise ModelError(f"solved_axis {solved_axis} out of range")
        if branch not in (1, -1):
            raise ModelError("branch must be +1 or -1")
        self.solved_axis = int(solved_axis)
        self.branch = int(branch)
        self.min_radicand = float(min_radicand)
        self.free_axes = [i for i in range(N) if i != self.solved_axis]
        self.eta = self.ambient_eta[self.free_axes]
        self.eta_k = self.ambient_eta[self.solved_axis]
        n = N - 1
        if box is None:
            b = 2.0 * math.sqrt(abs(c))
            box = [[-b, b]] * n
        lo, hi = _box(box, n)
        self.chart = Chart(lo, hi, self.solved_axis, self.branch)

    # solved coordinate squared, as a function of chart coordinates
    def radicand(self, u: np.ndarray) -> float:
        return (self.level - float(np.dot(self.eta, u * u))) / self.eta_k

    def valid(self, u):
        return self.radicand(u) >= self.min_radicand * abs(self.level)

    def metric_jet(self, u):
        w = self.eta * u
        D = self.level - float(np.dot(w, u))
        if D * self.eta_k <= 0.0:
            raise DomainError(f"point {list(u)} is off the quadric chart")
        g = np.diag(self.eta) + np.outer(w, w) / D
        n = u.shape[0]
        ww = np.outer(w, w)
        # d_k g_ij = eta_k (delta_ik w_j + delta_jk w_i) / D + 2 w_i w_j w_k / D^2
        dg = (2.0 / (D * D)) * w[:, None, None] * ww[None, :, :]
        ew = (self.eta[:, None] * w[None, :]) / D  # ew[k, j] = eta_k w_j / D
        idx = np.arange(n)
        dg[idx, idx, :] += ew
        dg[idx, :, idx] += ew
        return g, dg

    def embed(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        rad = self.radicand(u)
        if rad < 0.0:
            raise DomainError(f"negative radicand {rad} at {list(u)}")
        X = np.empty(u.shape[0] + 1)
        X[self.free_axes] = u
        X[self.solved_axis] = self.branch * math.sqrt(rad)
        return X

    def push_forward(self, u, v) -> np.ndarray:
        """Ambient velocity of the chart velocity ``v`` at ``u``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        X = self.embed(u)
        xk = X[self.solved_axis]
        if xk == 0.0:
            raise DomainError("chart Jacobian singular on the equator")
        V = np.empty_like(X)
        V[self.free_axes] = v
        V[self.solved_axis] = -float(np.dot(self.eta * u, v)) / (self.eta_k * xk)
        return V

    def to_chart(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X[self.solved_axis] * self.branch <= 0.0:
            raise DomainError("ambient point is on the other branch")
        return X[self.free_axes].copy()

    def ambient_form(self, a, b) -> float:
        return float(np.dot(self.ambient_eta * np.asarray(a), np.asarray(b)))

    def to_spec(self) -> dict:
        return {
            "type": "quadric",
            "dimension": self.dim,
            "signature": list(self.signature),
            "ambient_signature": list(self.ambient_signature),
            "level": self.level,
            "chart": {"solved_axis": self.solved_axis, "branch": self.branch},
            "domain": _bounds_out(self.chart.lo, self.chart.hi),
            "min_radicand": self.min_radicand,
        }

    def __repr__(self) -> str:
        R, P = self.ambient_signature
        return f"Quadric(({R}, {P}), {self.level}, axis={self.solved_axis}, branch={self.branch})"


# --------------------------------------------------------------------------
# warped product


class Warped(MetricModel):
    """g = base_sign dt^2 + alpha(t)^2 g_fiber; coordinate x0 is t."""

    def __init__(self, base_sign: int, alpha, fiber: MetricModel, t_interval=(None, None)):
        if base_sign not in (1, -1):
            raise ModelError("base_sign must be +1 or -1")
        self.base_sign = int(base_sign)
        if isinstance(alpha, str):
            alpha = parse(alpha, 1)
        if alpha.dim != 1:
            raise ModelError("alpha must be an expression in t only")
        self.alpha = alpha
        self.fiber = fiber
        r, p = fiber.signature
        self.signature = Signature(r + 1, p) if base_sign < 0 else Signature(r, p + 1)
        (tlo,), (thi,) = _box([t_interval], 1)
        self.t_interval = (tlo, thi)
        self.chart = Chart((tlo,) + fiber.chart.lo, (thi,) + fiber.chart.hi)
        m = fiber.dim
        self._zero_row = np.zeros((m + 1, m + 1))

    def alpha_jet(self, t: float) -> tuple[float, float, float]:
        return eval_jet1(self.alpha, t)

    def geodesic_acceleration(self, p, v) -> np.ndarray:
        """-Gamma(v, v) from the warped structure without forming Gamma."""
        a, a1, _ = self.alpha.jet1(float(p[0]))
        if a == 0.0:
            raise SingularMetricError(f"alpha vanishes at t = {p[0]}")
        q, V = p[1:], v[1:]
        fiber = self.fiber
        out = np.empty(self.dim)
        if isinstance(fiber, Flat):
            out[0] = self.base_sign * a * a1 * float((fiber.eta * V) @ V)
            out[1:] = V * (-2.0 * a1 * float(v[0]) / a)
            return out
        if isinstance(fiber, Warped):
            gF = fiber.metric(q)
            accF = fiber.geodesic_acceleration(q, V)
        else:
            gF, dgF = fiber.metric_jet(q)
            accF = -((levi_civita(fiber.inverse(q, gF), dgF) @ V) @ V)
        out[0] = self.base_sign * a * a1 * float(V @ gF @ V)
        out[1:] = accF - (2.0 * a1 / a * v[0]) * V
        return out

    def structural_christoffel(self, p) -> np.ndarray:
        """Gamma[k, i, j] from alpha, alpha' and the fiber connection.

        Gamma^t_ab = -eps alpha alpha' gF_ab, Gamma^a_tb = (alpha'/alpha) delta^a_b,
        Gamma^a_bc = fiber Gamma^a_bc; all other components vanish.
        """
        a, a1, _ = self.alpha_jet(p[0])
        if a == 0.0:
            raise SingularMetricError(f"alpha vanishes at t = {p[0]}")
        q = p[1:]
        if isinstance(self.fiber, Flat):
            gF = self.fiber.metric(q)
            gammaF = None
        elif isinstance(self.fiber, Warped):
            gF = self.fiber.metric(q)
            gammaF = self.fiber.structural_christoffel(q)
        else:
            gF, dgF = self.fiber.metric_jet(q)
            gammaF = levi_civita(self.fiber.inverse(q, gF), dgF)
        n = self.dim
        gamma = np.zeros((n, n, n))
        gamma[0, 1:, 1:] = (-self.base_sign * a * a1) * gF
        r = a1 / a
        idx = np.arange(1, n)
        gamma[idx, 0, idx] = r
        gamma[idx, idx, 0] = r
        if gammaF is not None:
            gamma[1:, 1:, 1:] = gammaF
        return gamma

    def valid(self, p):
        try:
            a = self.alpha(p[:1])
        except ArithmeticError:
            return False
        return a > 0.0 and self.fiber.valid(p[1:])

    def metric_jet(self, p):
        a, a1, _ = self.alpha_jet(p[0])
        gF, dgF = self.fiber.metric_jet(p[1:])
        n = self.dim
        g = np.zeros((n, n))
        g[0, 0] = self.base_sign
        a2 = a * a
        g[1:, 1:] = a2 * gF
        dg = np.zeros((n, n, n))
        dg[0, 1:, 1:] = (2.0 * a * a1) * gF
        dg[1:, 1:, 1:] = a2 * dgF
        return g, dg

    def inverse(self, p, g=None):
        a = self.alpha(p[:1])
        if a == 0.0:
            raise SingularMetricError(f"alpha vanishes at t = {p[0]}")
        n = self.dim
        ginv = np.zeros((n, n))
        ginv[0, 0] = self.base_sign
        ginv[1:, 1:] = self.fiber.inverse(p[1:]) / (a * a)
        return ginv

    def to_spec(self) -> dict:
        lo, hi = self.t_interval
        return {
            "type": "warped",
            "dimension": self.dim,
            "signature": list(self.signature),
            "base_sign": self.base_sign,
            "alpha": self.alpha.text,
            "t_interval": [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi],
            "fiber": self.fiber.to_spec(),
        }

    def __repr__(self) -> str:
        return f"Warped({self.base_sign}, '{self.alpha.text}', {self.fiber!r})"


# --------------------------------------------------------------------------
# custom coordinate metric


class Custom(MetricModel):
    """Metric given entry-wise by expressions in the chart coordinates."""

    def __init__(self, dim: int, signature: Sequence[int], entries, box=None):
        self.signature = Signature(*(int(x) for x in signature))
        if self.signature.dim != dim:
            raise ModelError(f"signature {tuple(signature)} does not match dimension {dim}")
        if len(entries) != dim or any(len(row) != dim for row in entries):
            raise ModelError(f"entries must be a {dim}x{dim} matrix")
        parsed = [[e if isinstance(e, Expression) else parse(str(e), dim) for e in row] for row in entries]
        self.entries = parsed
        lo, hi = _box(box, dim)
        self.chart = Chart(lo, hi)
        self._const = np.zeros((dim, dim))
        self._varying: list[tuple[int, int]] = []
        for i in range(dim):
            for j in range(i, dim):
                e = parsed[i][j]
                if e.is_constant():
                    self._const[i, j] = self._const[j, i] = e(np.zeros(dim))
                else:
                    self._varying.append((i, j))

    def metric_jet(self, p):
        n = self.dim
        g = self._const.copy()
        dg = np.zeros((n, n, n))
        for i, j in self._varying:
            jet = eval_jet2(self.entries[i][j], p)
            g[i, j] = g[j, i] = jet.value
            dg[:, i, j] = jet.grad
            dg[:, j, i] = jet.grad
        return g, dg

    def valid(self, p):
        try:
            for i, j in self._varying:
                self.entries[i][j](p)
        except ArithmeticError:
            return False
        return True

    def to_spec(self) -> dict:
        spec = {
            "type": "custom",
            "dimension": self.dim,
            "signature": list(self.signature),
            "entries": [[e.text for e in row] for row in self.entries],
        }
        spec["domain"] = _bounds_out(self.chart.lo, self.chart.hi)
        return spec

    def __repr__(self) -> str:
        return f"Custom({self.dim}, {tuple(self.signature)})"


# --------------------------------------------------------------------------
# module-level operations


def levi_civita(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma[k, i, j] = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij), dg[k, i, j] = d_k g_ij."""
    A = dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
    return 0.5 * np.tensordot(ginv, A, axes=([1], [2]))


def metric_at(m: MetricModel, p) -> np.ndarray:
    """Metric matrix at ``p`` after checking the domain and the inertia."""
    p = m.check_point(p)
    g = m.metric(p)
    neg, zero, pos = inertia(g)
    if zero or (neg, pos) != (m.signature.r, m.signature.p):
        raise ModelError(
            f"metric at {[float(x) for x in p]} has inertia ({neg}, {pos}, zero={zero}), "
            f"declared {tuple(m.signature)}"
        )
    return g


def inverse_metric_at(m: MetricModel, p) -> np.ndarray:
    p = m.check_point(p)
    return m.inverse(p)


def classify_vector(m: MetricModel, p, v, tol: float = 1e-9) -> VectorType:
    g = m.metric(np.asarray(p, dtype=float))
    return classify_with_metric(g, v, tol)


def classify_with_metric(g: np.ndarray, v, tol: float = 1e-9) -> VectorType:
    v = np.asarray(v, dtype=float)
    q = float(v @ g @ v)
    av = np.abs(v)
    scale = float(av @ np.abs(g) @ av)
    if q < -tol * scale:
        return VectorType.TIMELIKE
    if q > tol * scale:
        return VectorType.SPACELIKE
    return VectorType.NULL


def causal_type(g: np.ndarray, v, tol: float = 1e-9) -> VectorType:
    """Vector type measured against v^T |g| v, |g| the matrix absolute value.

    Unlike the entrywise proxy of ``classify_with_metric`` this scale cannot
    collapse when v points along a coordinate direction with g_ii = 0.
    """
    v = np.asarray(v, dtype=float)
    w, Q = np.linalg.eigh(0.5 * (g + g.T))
    c = Q.T @ v
    q = float(np.sum(w * c * c))
    scale = float(np.sum(np.abs(w) * c * c))
    if q < -tol * scale:
        return VectorType.TIMELIKE
    if q > tol * scale:
        return VectorType.SPACELIKE
    return VectorType.NULL


def quadric_embed(m: Quadric, p) -> np.ndarray:
    p = m.check_point(p)
    return m.embed(p)


def restrict_linear(m: Quadric, coeffs) -> Expression:
    """Chart expression of the ambient linear function sum_i a_i X_i."""
    a = np.asarray(coeffs, dtype=float)
    N = m.ambient_signature.dim
    if a.shape != (N,) or not np.all(np.isfinite(a)):
        raise ValueError(f"expected {N} finite coefficients")
    n = m.dim
    terms = []
    for j, axis in enumerate(m.free_axes):
        if a[axis] != 0.0:
            terms.append(_scaled(a[axis], Var(j)))
    ak = a[m.solved_axis]
    if ak != 0.0:
        # radicand = c / eta_k - sum_j (eta_j / eta_k) u_j^2
        rad: object = Const(m.level / m.eta_k)
        for j in range(n):
            coef = m.eta[j] / m.eta_k
            sq = Binary("^", Var(j), Const(2.0))
            rad = Binary("-" if coef > 0 else "+", rad, _scaled(abs(coef), sq))
        terms.append(_scaled(ak * m.branch, Unary("sqrt", rad)))
    if not terms:
        return Expression(Const(0.0), n)
    node = terms[0]
    for t in terms[1:]:
        if isinstance(t, Unary) and t.op == "neg":
            node = Binary("-", node, t.arg)
        else:
            node = Binary("+", node, t)
    return Expression(node, n)


def _scaled(c: float, node):
    if c == 1.0:
        return node
    if c == -1.0:
        return Unary("neg", node)
    return Binary("*", Const(float(c)), node)


def orthonormal_frame(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Columns E with E^T g E = diag(signs); timelike columns first."""
    w, Q = np.linalg.eigh(0.5 * (g + g.T))
    if np.any(w == 0.0):
        raise SingularMetricError("degenerate metric has no orthonormal frame")
    E = Q / np.sqrt(np.abs(w))
    return E, np.sign(w)


def sample_points(m: MetricModel, rng: np.random.Generator, count: int, max_tries: int = 200) -> np.ndarray:
    """``count`` points drawn uniformly from the sample box, inside the domain."""
    lo, hi = m.sample_box()
    out = np.empty((count, m.dim))
    got = 0
    for _ in range(max_tries):
        batch = rng.uniform(lo, hi, size=(max(2 * (count - got), 8), m.dim))
        for p in batch:
            if m.in_domain(p):
                out[got] = p
                got += 1
                if got == count:
                    return out
    raise DomainError(f"could only sample {got} of {count} domain points")
