"""Geodesic integration, conservation monitors and warped-product escape times.

Chart geodesics solve x'' = -Gamma(x)(x', x').  Quadric geodesics can also
be integrated in ambient coordinates, where gamma'' = -(<gamma', gamma'>/c) gamma
has no chart limitation.

The closed forms at the end concern the model -dt^2 + exp(2 sqrt(kappa) t) g_F
and the affine parameter needed to reach t = -infinity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Sequence

import numpy as np
from scipy import integrate as sp_integrate

from .integrator import solve
from .manifold import (
    DomainError,
    Flat,
    GeometryError,
    MetricModel,
    Quadric,
    SingularMetricError,
    VectorType,
    Warped,
    classify_with_metric,
    orthonormal_frame,
    sample_points,
)
from .parallel import ordered_map
from .tensor import ScalarField, _connection, first_integral

__all__ = [
    "Termination",
    "CausalClass",
    "GeodesicState",
    "GeodesicTrajectory",
    "geodesic_rhs",
    "integrate",
    "integrate_ambient",
    "norm_evolution",
    "affine_time",
    "boundary_distances",
    "boundary_distance_of",
    "escape_parameter",
    "completeness_probe",
    "CompletenessReport",
    "EscapeRecord",
    "attach_first_integral",
    "random_vector_of_type",
    "write_csv",
]

DIVERGENCE_FACTOR = 1e6


class Termination(str, Enum):
    BUDGET_REACHED = "budget_reached"
    DOMAIN_ESCAPE = "domain_escape"
    STEP_UNDERFLOW = "step_underflow"


class CausalClass(IntEnum):
    """The sign C of <gamma', gamma'> for a normalized geodesic."""

    SPACELIKE = 1
    TIMELIKE = -1
    LIGHTLIKE = 0

    @classmethod
    def of(cls, vt: VectorType) -> "CausalClass":
        return {
            VectorType.SPACELIKE: cls.SPACELIKE,
            VectorType.TIMELIKE: cls.TIMELIKE,
            VectorType.NULL: cls.LIGHTLIKE,
        }[vt]


@dataclass
class GeodesicState:
    position: np.ndarray
    velocity: np.ndarray
    s: float = 0.0


@dataclass
class GeodesicTrajectory:
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    termination: Termination
    s_end: float
    norm: np.ndarray
    norm_drift: float
    ambient: bool = False
    constraint_drift: float | None = None
    integral: np.ndarray | None = None
    integral_drift: float | None = None
    steps: int = 0
    rejected: int = 0

    @property
    def last(self) -> GeodesicState:
        return GeodesicState(self.x[-1].copy(), self.v[-1].copy(), float(self.s[-1]))

    @property
    def states(self) -> list[GeodesicState]:
        return [GeodesicState(x, v, float(s)) for s, x, v in zip(self.s, self.x, self.v)]

    def footer(self) -> dict:
        out = {
            "termination": self.termination.value,
            "s_end": float(self.s_end),
            "norm_drift": float(self.norm_drift),
            "steps": self.steps,
        }
        if self.constraint_drift is not None:
            out["constraint_drift"] = float(self.constraint_drift)
        if self.integral_drift is not None:
            out["integral_drift"] = float(self.integral_drift)
        return out


def geodesic_rhs(m: MetricModel, state: GeodesicState) -> tuple[np.ndarray, np.ndarray]:
    """(dx/ds, dv/ds) with dv/ds = -Gamma(v, v)."""
    x = np.asarray(state.position, dtype=float)
    if not m.in_domain(x):
        raise DomainError(f"point {list(x)} outside chart domain")
    v = np.asarray(state.velocity, dtype=float)
    return v.copy(), _acceleration_fn(m)(x, v)


def _acceleration_fn(m: MetricModel):
    """-Gamma(v, v), from the warped structure when available."""
    if isinstance(m, Warped):
        return m.geodesic_acceleration

    def acc(x, v):
        return -((_connection(m, x)[3] @ v) @ v)

    return acc


def _warped_flat_rhs(m: Warped, n: int):
    """Float-only right-hand side for a warped product over a flat fiber."""
    jet = m.alpha.jet1
    eps = float(m.base_sign)
    eta = m.fiber.eta.tolist()

    def rhs(y):
        yl = y.tolist()
        a, a1, _ = jet(yl[0])
        if a == 0.0:
            raise SingularMetricError(f"alpha vanishes at t = {yl[0]}")
        V = yl[n + 1 :]
        q = sum(e * w * w for e, w in zip(eta, V))
        r = -2.0 * a1 * yl[n] / a
        return np.array(yl[n:] + [eps * a * a1 * q] + [r * w for w in V])

    return rhs


def _chart_rhs(m: MetricModel, n: int):
    if isinstance(m, Warped) and isinstance(m.fiber, Flat):
        return _warped_flat_rhs(m, n)
    acc = _acceleration_fn(m)

    def rhs(y):
        out = np.empty(2 * n)
        out[:n] = y[n:]
        out[n:] = acc(y[:n], y[n:])
        return out

    return rhs


def _diverging(hist_s: np.ndarray, hist_y: np.ndarray, n: int, v0: np.ndarray) -> bool:
    """Monotone divergence of some coordinate with blown-up speed."""
    if len(hist_s) < 4:
        return False
    x = hist_y[:, :n]
    v = hist_y[:, n:]
    speed = np.max(np.abs(v[-1]))
    if speed < DIVERGENCE_FACTOR * max(1.0, float(np.max(np.abs(v0)))):
        return False
    dx = np.diff(x, axis=0)
    monotone = np.all(dx > 0, axis=0) | np.all(dx < 0, axis=0)
    return bool(np.any(monotone))


def _norms(m: MetricModel, xs: np.ndarray, vs: np.ndarray) -> np.ndarray:
    out = np.empty(len(xs))
    for i, (x, v) in enumerate(zip(xs, vs)):
        try:
            g = m.metric(x)
            out[i] = v @ g @ v
        except (GeometryError, ArithmeticError):
            out[i] = np.nan
    return out


def integrate(
    m: MetricModel,
    x0,
    v0,
    s_max: float,
    tol: float = 1e-10,
    sample_step: float = 0.01,
) -> GeodesicTrajectory:
    """Integrate the chart geodesic with initial point ``x0`` and velocity ``v0``.

    The run ends at ``s_max`` (budget_reached), when the chart domain is left
    (domain_escape, located by bisection) or when the adaptive step collapses.
    A collapse accompanied by monotone coordinate divergence and blown-up
    speed is reported as domain_escape at the limit parameter: the geodesic
    leaves every compact set of the chart at finite s.
    """
    if not 1e-12 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-12, 1e-4]")
    x0 = m.check_point(x0)
    v0 = np.asarray(v0, dtype=float)
    n = m.dim
    if v0.shape != (n,) or not np.all(np.isfinite(v0)):
        raise ValueError(f"velocity must be a finite vector of length {n}")
    res = solve(
        _chart_rhs(m, n),
        np.concatenate([x0, v0]),
        s_max,
        tol=tol,
        sample_step=sample_step,
        inside=lambda y: m.in_domain(y[:n]),
    )
    term = Termination(res.status)
    if term is Termination.STEP_UNDERFLOW and _diverging(res.history_s, res.history_y, n, v0):
        term = Termination.DOMAIN_ESCAPE
    xs, vs = res.y[:, :n], res.y[:, n:]
    norm = _norms(m, xs, vs)
    finite = norm[np.isfinite(norm)]
    return GeodesicTrajectory(
        s=res.s,
        x=xs,
        v=vs,
        termination=term,
        s_end=res.s_end,
        norm=norm,
        norm_drift=float(np.max(np.abs(finite - norm[0]))) if finite.size else math.nan,
        steps=res.steps,
        rejected=res.rejected,
    )


def integrate_ambient(
    m: Quadric,
    X0,
    V0,
    s_max: float,
    tol: float = 1e-10,
    sample_step: float = 0.01,
) -> GeodesicTrajectory:
    """Geodesic of the quadric <X, X> = c in ambient coordinates."""
    if not isinstance(m, Quadric):
        raise TypeError("ambient integration needs a Quadric model")
    X0 = np.asarray(X0, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    eta = m.ambient_eta
    c = m.level
    N = eta.shape[0]
    if X0.shape != (N,) or V0.shape != (N,):
        raise ValueError(f"ambient vectors must have length {N}")
    gap = float(X0 @ (eta * X0)) - c
    if abs(gap) > 1e-10 * max(1.0, abs(c)):
        raise ValueError(f"initial point is off the quadric by {gap:.3e}")
    tang = float(X0 @ (eta * V0))
    if abs(tang) > 1e-10 * max(1.0, float(np.linalg.norm(X0) * np.linalg.norm(V0))):
        raise ValueError(f"initial velocity is not tangent (<X, V> = {tang:.3e})")

    def rhs(y):
        X, V = y[:N], y[N:]
        out = np.empty(2 * N)
        out[:N] = V
        out[N:] = -(float(V @ (eta * V)) / c) * X
        return out

    res = solve(rhs, np.concatenate([X0, V0]), s_max, tol=tol, sample_step=sample_step)
    xs, vs = res.y[:, :N], res.y[:, N:]
    norm = np.einsum("ij,j,ij->i", vs, eta, vs)
    cons = np.einsum("ij,j,ij->i", xs, eta, xs) - c
    return GeodesicTrajectory(
        s=res.s,
        x=xs,
        v=vs,
        termination=Termination(res.status),
        s_end=res.s_end,
        norm=norm,
        norm_drift=float(np.max(np.abs(norm - norm[0]))),
        ambient=True,
        constraint_drift=float(np.max(np.abs(cons))),
        steps=res.steps,
        rejected=res.rejected,
    )


def attach_first_integral(traj: GeodesicTrajectory, m: MetricModel, f: ScalarField) -> float:
    """Record <Omega, Omega> + kappa omega^2 along the trajectory and its drift.

    Ambient samples are mapped to the model chart; samples on the other
    branch of the graph chart are skipped (their entries are NaN).
    """
    vals = np.full(len(traj.s), np.nan)
    for i, x in enumerate(traj.x):
        try:
            p = m.to_chart(x) if traj.ambient else x
            vals[i] = first_integral(m, p, f)
        except (GeometryError, ArithmeticError):
            continue
    ok = np.isfinite(vals)
    if not ok[0]:
        raise DomainError("first integral undefined at the initial point")
    traj.integral = vals
    traj.integral_drift = float(np.max(np.abs(vals[ok] - vals[0])))
    return traj.integral_drift


def write_csv(traj: GeodesicTrajectory, fh) -> None:
    """Columns s, x0.., v0.., norm[, first_integral]; '.' decimal point, 17 digits."""
    n = traj.x.shape[1]
    head = ["s"] + [f"x{i}" for i in range(n)] + [f"v{i}" for i in range(n)] + ["norm"]
    if traj.integral is not None:
        head.append("first_integral")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(head)
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    for i in range(len(traj.s)):
        row = [traj.s[i], *traj.x[i], *traj.v[i], traj.norm[i]]
        if traj.integral is not None:
            row.append(traj.integral[i])
        w.writerow([fmt(x) for x in row])


# --------------------------------------------------------------------------
# warped closed forms


def norm_evolution(alpha0: float, X0sq: float, C: float, alpha: float) -> float:
    """Base part <X, X> of a warped geodesic when the warping factor is ``alpha``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return alpha0**2 * (X0sq - C) / alpha**2 + C


def affine_time(kappa: float, t0: float, tdot0: float, C: float, t: float) -> float:
    """Affine parameter needed to descend from t0 to t on -dt^2 + e^{2 sqrt(kappa) t} g_F.

    The velocity is normalized so that <gamma', gamma'> = C (C in {1, -1, 0});
    ``t`` may be ``-inf``.  Computed by adaptive quadrature.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if not t < t0:
        raise ValueError("t must be below t0")
    rk = math.sqrt(kappa)
    a0sq = math.exp(2 * rk * t0)
    P = a0sq * (tdot0**2 + C)

    def radicand(tt):
        return P - C * math.exp(2 * rk * tt)

    lo_check = t if math.isfinite(t) else t0 - 50.0
    for tt in np.linspace(lo_check, t0, 64)[:-1]:
        if radicand(tt) <= 0:
            raise ValueError(f"radicand non-positive at t = {tt}: turning point crossed")

    def integrand(tt):
        a = math.exp(rk * tt)
        r = P - C * a * a
        return a / math.sqrt(r) if r > 0 else 0.0

    val, _ = sp_integrate.quad(integrand, t, t0, epsabs=1e-13, epsrel=1e-10, limit=200)
    return float(val)


def boundary_distances(kappa: float, value: float, cls: CausalClass) -> float:
    """Affine distance to t = -infinity from the closed forms d_l, d_t, d_s.

    ``value`` is v = |tdot0| for lightlike geodesics and the normalized
    tdot0 otherwise.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    rk = math.sqrt(kappa)
    cls = CausalClass(cls)
    if cls is CausalClass.LIGHTLIKE:
        if value <= 0:
            raise ValueError("lightlike distance needs v > 0")
        return 1.0 / (rk * value)
    if cls is CausalClass.TIMELIKE:
        a = abs(value)
        if a <= 1.0:
            raise ValueError("timelike geodesics with |tdot0| <= 1 do not reach the boundary")
        return math.log(math.sqrt((a + 1.0) / (a - 1.0))) / rk
    return math.asin(1.0 / math.sqrt(value**2 + 1.0)) / rk


def boundary_distance_of(kappa: float, v: float, Vsq: float) -> tuple[float, CausalClass]:
    """Distance for the raw tangent vector (v d_t, V) with <V, V> = Vsq."""
    q = -v * v + Vsq
    if q == 0.0:
        return boundary_distances(kappa, abs(v), CausalClass.LIGHTLIKE), CausalClass.LIGHTLIKE
    cls = CausalClass.TIMELIKE if q < 0 else CausalClass.SPACELIKE
    tdot0 = math.sqrt(v * v / abs(q))
    return boundary_distances(kappa, tdot0, cls), cls


def escape_parameter(kappa: float, tdot0: float, C: int) -> float:
    """Forward affine parameter to t = -infinity for a normalized velocity.

    ``tdot0`` is signed.  Geodesics heading up (tdot0 > 0) only come back
    if spacelike, after a turning point; the others never reach the boundary.
    """
    rk = math.sqrt(kappa)
    if C == 1:
        d = boundary_distances(kappa, tdot0, CausalClass.SPACELIKE)
        return d if tdot0 <= 0 else math.pi / rk - d
    if tdot0 >= 0:
        return math.inf
    if C == -1:
        return boundary_distances(kappa, tdot0, CausalClass.TIMELIKE)
    return boundary_distances(kappa, -tdot0, CausalClass.LIGHTLIKE)


# --------------------------------------------------------------------------
# completeness probe


def random_vector_of_type(g: np.ndarray, vt: VectorType, rng: np.random.Generator) -> np.ndarray:
    """Random vector of the requested type, normalized to |<v,v>| = 1 (or a
    unit timelike plus unit spacelike part when null)."""
    E, signs = orthonormal_frame(g)
    neg = np.flatnonzero(signs < 0)
    pos = np.flatnonzero(signs > 0)
    if vt is not VectorType.SPACELIKE and neg.size == 0:
        raise ValueError("Riemannian metric has no timelike or null vectors")
    if vt is not VectorType.TIMELIKE and pos.size == 0:
        raise ValueError("negative definite metric has no spacelike or null vectors")

    def unit(k):
        u = rng.normal(size=k)
        return u / np.linalg.norm(u)

    w = np.zeros(g.shape[0])
    phi = rng.uniform(0.0, 1.5)
    if vt is VectorType.SPACELIKE:
        if neg.size:
            w[neg] = math.sinh(phi) * unit(neg.size)
        w[pos] = math.cosh(phi) * unit(pos.size)
    elif vt is VectorType.TIMELIKE:
        w[neg] = math.cosh(phi) * unit(neg.size)
        if pos.size:
            w[pos] = math.sinh(phi) * unit(pos.size)
    else:
        w[neg] = unit(neg.size)
        w[pos] = unit(pos.size)
    return E @ w


@dataclass
class EscapeRecord:
    x0: list[float]
    v0: list[float]
    direction: int
    s_star: float
    causal_class: str


@dataclass
class CompletenessReport:
    runs: int
    complete: int
    complete_fraction: float
    escapes: list[EscapeRecord] = field(default_factory=list)
    max_norm_drift: float = 0.0

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "complete": self.complete,
            "complete_fraction": self.complete_fraction,
            "max_norm_drift": self.max_norm_drift,
            "escapes": [vars(e) for e in self.escapes],
        }


def completeness_probe(
    m: MetricModel,
    samples: int = 20,
    seed: int = 0,
    s_budget: float = 50.0,
    tol: float = 1e-10,
    classes: Sequence[VectorType] | None = None,
    both_directions: bool = True,
    sample_step: float = 0.1,
    threads: int = 1,
) -> CompletenessReport:
    """Integrate seeded geodesics and record those that stop before ``s_budget``.

    Initial points are uniform in the sample box; velocities cycle through
    ``classes`` (default: every type the signature allows).
    """
    rng = np.random.default_rng(seed)
    if classes is None:
        classes = [VectorType.SPACELIKE]
        if m.signature.r > 0 and m.signature.p > 0:
            classes += [VectorType.TIMELIKE, VectorType.NULL]
        elif m.signature.r > 0:
            classes = [VectorType.TIMELIKE]
    pts = sample_points(m, rng, samples)
    jobs = []
    for i, p in enumerate(pts):
        vt = VectorType(classes[i % len(classes)])
        v = random_vector_of_type(m.metric(p), vt, rng)
        cls = classify_with_metric(m.metric(p), v)
        for direction in (1, -1) if both_directions else (1,):
            jobs.append((p, direction, direction * v, cls))

    def run(job):
        p, _, v, _ = job
        return integrate(m, p, v, s_budget, tol, sample_step)

    runs = complete = 0
    drift = 0.0
    escapes: list[EscapeRecord] = []
    for (p, direction, v, cls), traj in zip(jobs, ordered_map(run, jobs, threads)):
        runs += 1
        if traj.termination is Termination.BUDGET_REACHED:
            complete += 1
            if np.isfinite(traj.norm_drift):
                drift = max(drift, traj.norm_drift)
        else:
            escapes.append(
                EscapeRecord(
                    x0=[float(a) for a in p],
                    v0=[float(a) for a in v],
                    direction=direction,
                    s_star=float(traj.s_end),
                    causal_class=cls.value,
                )
            )
    return CompletenessReport(
        runs=runs,
        complete=complete,
        complete_fraction=complete / runs if runs else 1.0,
        escapes=escapes,
        max_norm_drift=drift,
    )
