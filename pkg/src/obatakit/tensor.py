"""Levi-Civita connection, covariant Hessian, curvature and the Obata residual.

Index conventions (all arrays are numpy):

* ``christoffel(m, p)[k, i, j]`` is the connection coefficient with upper
  index ``k``.
* ``riemann(m, p)[l, i, j, k]`` is the ``l`` component of R(d_i, d_j) d_k,
  antisymmetric in ``i, j``.  With this convention the sectional curvature is
  K(X, Y) = <R(X, Y) Y, X> / (<X,X><Y,Y> - <X,Y>^2).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .expr import Expression, eval_jet2, parse
from .manifold import (
    DomainError,
    GeometryError,
    MetricModel,
    VectorType,
    Warped,
    causal_type,
    levi_civita,
    sample_points,
)
from .parallel import ordered_map

if TYPE_CHECKING:
    from .obata import CaseLabel

__all__ = [
    "ScalarField",
    "ObataReport",
    "DegeneratePlaneError",
    "PointError",
    "christoffel",
    "gradient",
    "hessian",
    "obata_residual",
    "first_integral",
    "riemann",
    "sectional",
    "sectional_from",
    "warped_sectional",
    "obata_verify",
    "fit_kappa",
    "metric_compatibility_defect",
    "gradient_derivative",
]

FD_STEP = 1e-4


class DegeneratePlaneError(GeometryError):
    """The plane spanned by two vectors is null (or the vectors are dependent)."""


class PointError(GeometryError):
    """An evaluation failure annotated with the sample point that caused it."""

    def __init__(self, message: str, point):
        super().__init__(f"{message} at point {[float(x) for x in point]}")
        self.point = [float(x) for x in point]


@dataclass(frozen=True)
class ScalarField:
    """A candidate Obata function omega together with its constant kappa."""

    omega: Expression
    kappa: float

    @classmethod
    def from_text(cls, text: str, dim: int, kappa: float) -> "ScalarField":
        return cls(parse(text, dim), float(kappa))

    @property
    def dim(self) -> int:
        return self.omega.dim


def _point(p) -> np.ndarray:
    return np.asarray(p, dtype=float)


def _connection(m: MetricModel, p: np.ndarray):
    g, dg = m.metric_jet(p)
    ginv = m.inverse(p, g)
    gamma = levi_civita(ginv, dg)
    return g, ginv, dg, gamma


def christoffel(m: MetricModel, p) -> np.ndarray:
    """Gamma[k, i, j] of the Levi-Civita connection at ``p``."""
    return _connection(m, _point(p))[3]


def gradient(m: MetricModel, p, f: ScalarField) -> np.ndarray:
    p = _point(p)
    jet = eval_jet2(f.omega, p)
    return m.inverse(p) @ jet.grad


def hessian(m: MetricModel, p, f: ScalarField) -> np.ndarray:
    """Covariant Hessian H_ij = d_i d_j omega - Gamma^k_ij d_k omega."""
    p = _point(p)
    jet = eval_jet2(f.omega, p)
    gamma = _connection(m, p)[3]
    return _hessian_from(jet, gamma)


def _hessian_from(jet, gamma: np.ndarray) -> np.ndarray:
    H = jet.hess - np.tensordot(jet.grad, gamma, axes=1)
    return 0.5 * (H + H.T)


def obata_residual(m: MetricModel, p, f: ScalarField) -> float:
    """max |H^omega + kappa omega g| over matrix entries."""
    p = _point(p)
    jet = eval_jet2(f.omega, p)
    g, _, _, gamma = _connection(m, p)
    H = _hessian_from(jet, gamma)
    return float(np.max(np.abs(H + f.kappa * jet.value * g)))


def first_integral(m: MetricModel, p, f: ScalarField) -> float:
    """<Omega, Omega> + kappa omega^2."""
    p = _point(p)
    jet = eval_jet2(f.omega, p)
    ginv = m.inverse(p)
    return float(jet.grad @ ginv @ jet.grad + f.kappa * jet.value**2)


def gradient_derivative(m: MetricModel, p, f: ScalarField):
    """Omega at ``p`` and its coordinate derivatives D[j, i] = d_j Omega^i."""
    p = _point(p)
    jet = eval_jet2(f.omega, p)
    g, ginv, dg, _ = _connection(m, p)
    # d_j g^{ik} = -g^{ia} d_j g_ab g^{bk}
    dginv = -np.einsum("ia,jab,bk->jik", ginv, dg, ginv)
    D = np.einsum("jik,k->ji", dginv, jet.grad) + (ginv @ jet.hess).T
    return ginv @ jet.grad, D


def metric_compatibility_defect(m: MetricModel, p) -> float:
    """max |d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il|."""
    g, _, dg, gamma = _connection(m, _point(p))
    t = np.einsum("lki,lj->kij", gamma, g)
    return float(np.max(np.abs(dg - t - t.transpose(0, 2, 1))))


def _christoffel_checked(m: MetricModel, q: np.ndarray) -> np.ndarray:
    try:
        return _connection(m, q)[3]
    except (GeometryError, ArithmeticError) as exc:
        raise DomainError(f"finite-difference stencil leaves the domain at {list(q)}: {exc}") from None


def riemann(m: MetricModel, p, step: float = FD_STEP) -> np.ndarray:
    """R[l, i, j, k] from central differences of the exact Christoffel symbols.

    The derivative uses the fourth-order five-point central stencil with
    spacing ``step * (1 + |p_m|)`` in coordinate ``m``.
    """
    p = _point(p)
    n = p.shape[0]
    gamma = _connection(m, p)[3]
    dgamma = np.empty((n, n, n, n))
    for a in range(n):
        h = step * (1.0 + abs(p[a]))
        e = np.zeros(n)
        e[a] = h
        gp1 = _christoffel_checked(m, p + e)
        gm1 = _christoffel_checked(m, p - e)
        gp2 = _christoffel_checked(m, p + 2 * e)
        gm2 = _christoffel_checked(m, p - 2 * e)
        dgamma[a] = (8.0 * (gp1 - gm1) - (gp2 - gm2)) / (12.0 * h)
    # P[l, i, j, k] = d_i Gamma^l_jk + Gamma^l_im Gamma^m_jk
    P = dgamma.transpose(1, 0, 2, 3) + np.einsum("lim,mjk->lijk", gamma, gamma)
    return P - P.transpose(0, 2, 1, 3)


def _scale(g: np.ndarray, v: np.ndarray) -> float:
    av = np.abs(v)
    return float(av @ np.abs(g) @ av)


def sectional_from(R: np.ndarray, g: np.ndarray, X, Y, rel: float = 1e-8) -> float:
    """Sectional curvature of span(X, Y) given the Riemann tensor and metric."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    xx, yy, xy = X @ g @ X, Y @ g @ Y, X @ g @ Y
    denom = xx * yy - xy * xy
    if abs(denom) <= rel * _scale(g, X) * _scale(g, Y):
        raise DegeneratePlaneError(
            f"degenerate plane: <X,X><Y,Y> - <X,Y>^2 = {denom:.3e}"
        )
    RXYY = np.einsum("lijk,i,j,k->l", R, X, Y, Y)
    return float(RXYY @ g @ X) / denom


def sectional(m: MetricModel, p, X, Y, rel: float = 1e-8) -> float:
    p = _point(p)
    return sectional_from(riemann(m, p), m.metric(p), X, Y, rel)


def warped_sectional(m: Warped, p, which: str, X, Y, rel: float = 1e-8) -> float:
    """Sectional curvature of a warped product from alpha and the fiber.

    ``which`` is ``"base-fiber"`` (X along d_t, Y tangent to the fiber) or
    ``"fiber-fiber"`` (both tangent to the fiber).
    """
    if not isinstance(m, Warped):
        raise TypeError("warped_sectional needs a Warped model")
    p = _point(p)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    g = m.metric(p)
    xx, yy, xy = X @ g @ X, Y @ g @ Y, X @ g @ Y
    denom = xx * yy - xy * xy
    if abs(denom) <= rel * _scale(g, X) * _scale(g, Y):
        raise DegeneratePlaneError(f"degenerate plane: determinant {denom:.3e}")
    a, a1, a2 = m.alpha_jet(p[0])
    eps = m.base_sign
    tiny = 1e-14
    if which == "base-fiber":
        if np.max(np.abs(X[1:])) > tiny * np.max(np.abs(X)) or abs(Y[0]) > tiny * np.max(np.abs(Y)):
            raise ValueError("base-fiber plane needs X along d_t and Y tangent to the fiber")
        # H^alpha(d_t, d_t) = alpha'' since the base coordinate is geodesic
        return -eps * a2 / a
    if which == "fiber-fiber":
        if abs(X[0]) > tiny * np.max(np.abs(X)) or abs(Y[0]) > tiny * np.max(np.abs(Y)):
            raise ValueError("fiber-fiber plane needs both vectors tangent to the fiber")
        if m.fiber.dim < 2:
            raise ValueError("a 1-dimensional fiber has no planes")
        kf = sectional(m.fiber, p[1:], X[1:], Y[1:], rel)
        grad_alpha_sq = eps * a1 * a1
        return (kf - grad_alpha_sq) / (a * a)
    raise ValueError(f"unknown plane kind {which!r}")


@dataclass
class ObataReport:
    max_residual: float
    h_mean: float
    h_spread: float
    omega_range: tuple[float, float]
    type_census: dict[str, int]
    case: "CaseLabel"
    samples: int
    seed: int
    null_probes: int = 0
    kappa: float = 0.0
    worst_point: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["omega_range"] = list(self.omega_range)
        d["case"] = self.case.to_dict()
        return d


def _pointwise(m: MetricModel, p: np.ndarray, f: ScalarField):
    """(residual, first integral, omega, gradient type) at one point."""
    jet = eval_jet2(f.omega, p)
    g, ginv, _, gamma = _connection(m, p)
    H = _hessian_from(jet, gamma)
    res = float(np.max(np.abs(H + f.kappa * jet.value * g)))
    Om = ginv @ jet.grad
    fi = float(jet.grad @ Om + f.kappa * jet.value**2)
    return res, fi, jet.value, g, Om


def _project_to_level(m: MetricModel, f: ScalarField, p: np.ndarray, target: float) -> np.ndarray | None:
    q = p.copy()
    for _ in range(30):
        jet = eval_jet2(f.omega, q)
        gap = jet.value - target
        if abs(gap) <= 1e-14 * (1.0 + abs(target)):
            return q if m.in_domain(q) else None
        gg = float(jet.grad @ jet.grad)
        if gg == 0.0:
            return None
        q = q - gap * jet.grad / gg
        if not m.in_domain(q):
            return None
    return None


def obata_verify(
    m: MetricModel,
    f: ScalarField,
    samples: int = 200,
    seed: int = 0,
    census_tol: float = 1e-9,
    case_tol: float = 1e-6,
    null_probe_every: int = 4,
    threads: int = 1,
) -> ObataReport:
    """Sample the residual, the first integral and the gradient types.

    Points are drawn uniformly from the model's sample box.  Because null
    gradients live on a measure-zero set, every ``null_probe_every``-th point
    is moved (when possible) onto the level set kappa omega^2 = h on which
    <Omega, Omega> vanishes; ``null_probes`` counts the moved points.
    """
    from .obata import classify_case

    if samples < 1:
        raise ValueError("samples must be >= 1")
    if f.dim != m.dim:
        raise ValueError(f"field dimension {f.dim} does not match model dimension {m.dim}")
    rng = np.random.default_rng(seed)
    pts = sample_points(m, rng, samples)

    def evaluate(p):
        try:
            return _pointwise(m, p, f)
        except (GeometryError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PointError(f"{type(exc).__name__}: {exc}", p) from exc

    rows = ordered_map(evaluate, pts, threads)
    h0 = float(np.mean([r[1] for r in rows]))
    probes = 0
    if null_probe_every and f.kappa != 0.0 and h0 / f.kappa >= -case_tol:
        level = np.sqrt(max(h0 / f.kappa, 0.0))
        for i in range(null_probe_every - 1, samples, null_probe_every):
            target = level if rows[i][2] >= 0 else -level
            q = _project_to_level(m, f, pts[i], target)
            if q is not None:
                pts[i] = q
                rows[i] = evaluate(q)
                probes += 1

    res = np.array([r[0] for r in rows])
    fis = np.array([r[1] for r in rows])
    om = np.array([r[2] for r in rows])
    census = {t.value: 0 for t in VectorType}
    for r in rows:
        census[causal_type(r[3], r[4], census_tol).value] += 1
    h_mean = float(np.mean(fis))
    worst = int(np.argmax(res))
    return ObataReport(
        max_residual=float(res.max()),
        h_mean=h_mean,
        h_spread=float(fis.max() - fis.min()),
        omega_range=(float(om.min()), float(om.max())),
        type_census=census,
        case=classify_case(f.kappa, h_mean, case_tol),
        samples=samples,
        seed=seed,
        null_probes=probes,
        kappa=float(f.kappa),
        worst_point=[float(x) for x in pts[worst]],
    )


def fit_kappa(m: MetricModel, omega: Expression, samples: int = 50, seed: int = 0) -> float:
    """Least-squares kappa with H^omega ~ -kappa omega g (exploration only)."""
    rng = np.random.default_rng(seed)
    num = den = 0.0
    for p in sample_points(m, rng, samples):
        jet = eval_jet2(omega, p)
        g, _, _, gamma = _connection(m, p)
        H = _hessian_from(jet, gamma)
        wg = jet.value * g
        num -= float(np.sum(H * wg))
        den += float(np.sum(wg * wg))
    if den == 0.0:
        raise ValueError("omega vanishes at every sample; kappa is undetermined")
    return num / den
