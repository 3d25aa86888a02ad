"""Case table, closed-form solution families and structure instance builders.

The (kappa, h) table maps the signs of kappa and of the first integral h to
the causal type of Omega = grad omega and to the global structure of the
manifold.  Each builder returns a warped (or custom) model with an Obata
function and verifies the residual and first integral before returning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import Expression, eval_jet2, parse
from .geodesic import Termination, integrate, integrate_ambient
from .manifold import (
    Custom,
    Flat,
    GeometryError,
    MetricModel,
    Quadric,
    Signature,
    Warped,
    sample_points,
)
from .tensor import (
    DegeneratePlaneError,
    ObataReport,
    ScalarField,
    _project_to_level,
    obata_verify,
    sectional,
    warped_sectional,
)

__all__ = [
    "CaseLabel",
    "classify_case",
    "SolutionFamily",
    "solution_family",
    "closed_form_f",
    "BranchError",
    "InstanceError",
    "InstanceBundle",
    "build_instance",
    "INSTANCE_CASES",
    "killing_check",
    "totally_geodesic_check",
    "ambient_coefficients",
    "bump_fiber",
    "asymptotic_flatness_probe",
    "FlatnessReport",
]


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class CaseLabel:
    kappa_sign: str  # "+", "0", "-"
    h_sign: str
    omega_type: str
    structure: str
    riemannian: bool
    range_text: str | None  # closure of omega(M) on a complete Riemannian manifold
    omega_range: tuple[float, float] | None

    def to_dict(self) -> dict:
        return {
            "kappa_sign": self.kappa_sign,
            "h_sign": self.h_sign,
            "omega_type": self.omega_type,
            "structure": self.structure,
            "riemannian": self.riemannian,
            "range": self.range_text,
            "omega_range": None if self.omega_range is None else list(self.omega_range),
        }


# (kappa sign, h sign) -> (type of Omega, structure tag)
TABLE: dict[tuple[str, str], tuple[str, str]] = {
    ("+", "+"): ("depends", "constant-curvature"),
    ("+", "-"): ("timelike", "warped-split"),
    ("+", "0"): ("timelike or null", "asymptotically-flat-split"),
    ("-", "+"): ("spacelike", "warped-split"),
    ("-", "-"): ("depends", "constant-curvature"),
    ("-", "0"): ("spacelike or null", "asymptotically-flat-split"),
    ("0", "+"): ("spacelike", "direct-product"),
    ("0", "-"): ("timelike", "direct-product"),
    ("0", "0"): ("null", "null-killing"),
}

# With a positive definite metric <Omega, Omega> >= 0, so h >= kappa omega^2
# rules out these sign pairs for nonconstant omega.
RIEMANNIAN_IMPOSSIBLE = {("+", "-"), ("+", "0"), ("0", "-"), ("0", "0")}


def _sign(x: float, tol: float) -> str:
    if x > tol:
        return "+"
    if x < -tol:
        return "-"
    return "0"


def classify_case(kappa: float, h: float, tol: float = 1e-9) -> CaseLabel:
    """Table row for (kappa, h), signs thresholded at ``tol``."""
    ks, hs = _sign(kappa, tol), _sign(h, tol)
    omega_type, structure = TABLE[(ks, hs)]
    riemannian = (ks, hs) not in RIEMANNIAN_IMPOSSIBLE
    text: str | None = None
    rng: tuple[float, float] | None = None
    if riemannian:
        if ks == "+":
            b = math.sqrt(h / kappa)
            text, rng = "[-sqrt(h/kappa), sqrt(h/kappa)]", (-b, b)
        elif ks == "-" and hs != "+":
            b = math.sqrt(abs(h) / abs(kappa)) if hs == "-" else 0.0
            text = "[sqrt(|h|/|kappa|), inf) or (-inf, -sqrt(|h|/|kappa|)]"
            rng = (b, math.inf)
        else:
            text, rng = "(-inf, inf)", (-math.inf, math.inf)
    return CaseLabel(ks, hs, omega_type, structure, riemannian, text, rng)


# --------------------------------------------------------------------------
# solution families f'' = -kappa f, (f')^2 + kappa f^2 = h


class BranchError(ValueError):
    """No closed-form branch exists for the requested (kappa, h)."""


def _num(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class SolutionFamily:
    branch: str  # "cos", "sinh", "cosh", "exp", "linear"
    kappa: float
    h: float
    f: Expression
    alpha: Expression
    interval: tuple[float, float]  # natural t-interval for sampling

    def __call__(self, t: float) -> float:
        return self.f(np.array([t]))

    def derivatives(self, t: float) -> tuple[float, float, float]:
        j = eval_jet2(self.f, np.array([t]))
        return j.value, float(j.grad[0]), float(j.hess[0, 0])

    def grid(self, count: int = 101) -> np.ndarray:
        return np.linspace(self.interval[0], self.interval[1], count)


def solution_family(kappa: float, h: float, tol: float = 0.0) -> SolutionFamily:
    """Branch of f with f(0) at the critical point (or 0 for the linear case).

    For kappa < 0 the amplitudes are sqrt(h/|kappa|) and sqrt(|h|/|kappa|),
    the values forced by (f')^2 + kappa f^2 = h.  ``alpha`` is |f'| written
    so that it is positive on the interior of ``interval``.
    """
    ks, hs = _sign(kappa, tol), _sign(h, tol)
    k = abs(kappa)
    rk = math.sqrt(k)
    T = 3.0 / rk if k else 3.0
    if ks == "+":
        if hs != "+":
            raise BranchError("kappa > 0 needs h > 0 for a real closed-form branch")
        A = math.sqrt(h / kappa)
        f = f"{_num(A)}*cos({_num(rk)}*t)"
        alpha = f"{_num(math.sqrt(h))}*sin({_num(rk)}*t)"
        return SolutionFamily("cos", kappa, h, parse(f, 1), parse(alpha, 1), (0.0, math.pi / rk))
    if ks == "-":
        if hs == "+":
            A = math.sqrt(h / k)
            f = f"{_num(A)}*sinh({_num(rk)}*t)"
            alpha = f"{_num(math.sqrt(h))}*cosh({_num(rk)}*t)"
            name, iv = "sinh", (-T, T)
        elif hs == "-":
            A = math.sqrt(abs(h) / k)
            f = f"{_num(A)}*cosh({_num(rk)}*t)"
            alpha = f"{_num(math.sqrt(abs(h)))}*sinh({_num(rk)}*t)"
            name, iv = "cosh", (0.0, T)
        else:
            f = f"{_num(1.0 / rk)}*exp({_num(rk)}*t)"
            alpha = f"exp({_num(rk)}*t)"
            name, iv = "exp", (-T, T)
        return SolutionFamily(name, kappa, h, parse(f, 1), parse(alpha, 1), iv)
    if hs != "+":
        raise BranchError("kappa = 0 needs h > 0 for a nonconstant closed-form branch")
    s = math.sqrt(h)
    return SolutionFamily("linear", kappa, h, parse(f"{_num(s)}*t", 1), parse(_num(s), 1), (-T, T))


def closed_form_f(kappa: float, h: float, t: float) -> float:
    return solution_family(kappa, h)(t)


# --------------------------------------------------------------------------
# structure instances


class InstanceError(ValueError):
    """The requested instance is inconsistent (signs, fiber type or curvature)."""


INSTANCE_CASES = ("thm4.1a", "thm4.1b", "thm4.2", "thm4.3", "thm4.5i", "thm4.5ii", "nullkilling")

VERIFY_SAMPLES = 100
RESIDUAL_TOL = 1e-8
SPREAD_TOL = 1e-7
FIBER_CURVATURE_TOL = 1e-4


@dataclass
class InstanceBundle:
    model: MetricModel
    omega: Expression
    kappa: float
    expected_h: float
    theorem: str
    report: ObataReport | None = None
    passed: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def field(self) -> ScalarField:
        return ScalarField(self.omega, self.kappa)

    def verify(self, samples: int = VERIFY_SAMPLES, seed: int = 0) -> bool:
        rep = obata_verify(self.model, self.field, samples=samples, seed=seed, null_probe_every=0)
        self.report = rep
        self.passed = (
            rep.max_residual <= RESIDUAL_TOL
            and rep.h_spread <= SPREAD_TOL
            and abs(rep.h_mean - self.expected_h) <= SPREAD_TOL * (1.0 + abs(self.expected_h))
        )
        return self.passed

    def to_spec(self) -> dict:
        spec = {"schema": 1}
        spec.update(self.model.to_spec())
        spec["omega"] = self.omega.text
        spec["kappa"] = self.kappa
        spec["expected_h"] = self.expected_h
        spec["theorem"] = self.theorem
        return spec


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InstanceError(message)


def fiber_curvature(fiber: MetricModel, samples: int = 12, seed: int = 0) -> np.ndarray:
    """Sectional curvatures of random nondegenerate fiber planes."""
    rng = np.random.default_rng(seed)
    out = []
    for p in sample_points(fiber, rng, samples):
        for _ in range(5):
            X, Y = rng.normal(size=(2, fiber.dim))
            try:
                out.append(sectional(fiber, p, X, Y))
                break
            except DegeneratePlaneError:
                continue
    return np.array(out)


def _check_fiber_curvature(fiber: MetricModel, target: float) -> None:
    if fiber.dim < 2:
        return
    K = fiber_curvature(fiber)
    worst = float(np.max(np.abs(K - target)))
    _require(
        worst <= FIBER_CURVATURE_TOL,
        f"fiber curvature mismatch: need constant {target:.6g}, sampled deviation {worst:.3e}",
    )


def build_instance(
    case: str,
    kappa: float,
    h: float,
    fiber: MetricModel | None = None,
    half: int = 1,
    verify: bool = True,
) -> InstanceBundle:
    """Model and Obata function realizing one structure theorem.

    thm4.1a   dt^2 + (sqrt(h) sin(sqrt(k) t))^2 g_F, F of constant curvature k h
    thm4.1b  -dt^2 + (sqrt(h) sinh(sqrt(k) t))^2 g_F, F of constant curvature -k h
    thm4.2   -dt^2 + (sqrt|h| cosh(sqrt(k) t))^2 g_F
    thm4.3   -dt^2 + exp(2 sqrt(k) t) g_F, omega = half * exp(sqrt(k) t)/sqrt(k)
    thm4.5i   dt^2 + h g_F,   omega = sqrt(h) t
    thm4.5ii -dt^2 + |h| g_F, omega = sqrt|h| t
    nullkilling  sin(w) dw^2 + 2 dw dxi + dy^2 in coordinates (w, xi, y), omega = w
    """
    if case not in INSTANCE_CASES:
        raise InstanceError(f"unknown case {case!r}; expected one of {', '.join(INSTANCE_CASES)}")
    kappa, h = float(kappa), float(h)
    _require(math.isfinite(kappa) and math.isfinite(h), "kappa and h must be finite")
    if case == "nullkilling":
        _require(kappa == 0.0 and h == 0.0, "nullkilling needs kappa = 0 and h = 0")
        _require(fiber is None, "nullkilling takes no fiber")
        model = Custom(3, (1, 2), [["sin(x0)", "1", "0"], ["1", "0", "0"], ["0", "0", "1"]])
        bundle = InstanceBundle(model, parse("x0", 3), 0.0, 0.0, case)
        if verify:
            bundle.verify()
        return bundle

    rk = math.sqrt(abs(kappa))
    K, R = _num(rk), _num(math.sqrt(abs(h)))
    if case in ("thm4.1a", "thm4.1b", "thm4.2", "thm4.3"):
        _require(kappa > 0, f"{case} needs kappa > 0")
    else:
        _require(kappa == 0.0, f"{case} needs kappa = 0")
    want_h = {"thm4.1a": "+", "thm4.1b": "+", "thm4.2": "-", "thm4.3": "0", "thm4.5i": "+", "thm4.5ii": "-"}
    _require(_sign(h, 0.0) == want_h[case], f"{case} needs h {'>' if want_h[case] == '+' else '<' if want_h[case] == '-' else '='} 0")

    eps = 1 if case in ("thm4.1a", "thm4.5i") else -1
    t_interval: tuple[float | None, float | None] = (None, None)
    if case == "thm4.1a":
        alpha = f"{R}*sin({K}*t)"
        omega = f"{_num(math.sqrt(h / kappa))}*cos({K}*x0)"
        t_interval = (0.0, math.pi / rk)
        if fiber is None:
            fiber = Quadric((1, 2), 1.0 / (kappa * h))
        _check_fiber_curvature(fiber, kappa * h)
    elif case == "thm4.1b":
        alpha = f"{R}*sinh({K}*t)"
        omega = f"{_num(math.sqrt(h / kappa))}*cosh({K}*x0)"
        t_interval = (0.0, None)
        if fiber is None:
            fiber = Quadric((1, 2), -1.0 / (kappa * h))
        _check_fiber_curvature(fiber, -kappa * h)
    elif case == "thm4.2":
        alpha = f"{R}*cosh({K}*t)"
        omega = f"{_num(math.sqrt(abs(h) / kappa))}*sinh({K}*x0)"
    elif case == "thm4.3":
        _require(half in (1, -1), "half must be +1 or -1")
        alpha = f"exp({K}*t)"
        omega = f"{_num(half / rk)}*exp({K}*x0)"
    else:
        alpha = R
        omega = f"{R}*x0"
    if fiber is None:
        fiber = Flat(0, 2)
    model = Warped(eps, alpha, fiber, t_interval)
    bundle = InstanceBundle(model, parse(omega, model.dim), kappa, h, case)
    if case == "thm4.3":
        bundle.notes.append(f"half {'M+' if half > 0 else 'M-'}")
    if verify:
        bundle.verify()
    return bundle


def required_fiber_signature(case: str, total: Signature) -> Signature:
    """Fiber signature required by the case, given the total signature (r, p)."""
    if case in ("thm4.1a", "thm4.5i"):
        return Signature(total.r, total.p - 1)
    return Signature(total.r - 1, total.p)


# --------------------------------------------------------------------------
# Killing fields and totally geodesic levels


def killing_check(
    m: MetricModel, components: Sequence[Expression | str], samples: int = 50, seed: int = 0
) -> float:
    """Max |(L_Z g)_ij| over seeded samples for the vector field Z."""
    n = m.dim
    Z = [c if isinstance(c, Expression) else parse(str(c), n) for c in components]
    if len(Z) != n:
        raise ValueError(f"vector field needs {n} components")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in sample_points(m, rng, samples):
        g, dg = m.metric_jet(p)
        jets = [eval_jet2(z, p) for z in Z]
        zv = np.array([j.value for j in jets])
        dZ = np.array([j.grad for j in jets])  # dZ[k, i] = d_i Z^k
        L = np.tensordot(zv, dg, axes=1) + dZ.T @ g + g @ dZ
        worst = max(worst, float(np.max(np.abs(L))))
    return worst


def ambient_coefficients(m: Quadric, omega: Expression, tol: float = 1e-10) -> np.ndarray | None:
    """Ambient covector a with omega = <a, X> restricted, if omega is linear."""
    if not isinstance(m, Quadric):
        return None
    N = m.ambient_signature.dim
    rng = np.random.default_rng(12345)
    pts = sample_points(m, rng, 3 * N)
    X = np.array([m.embed(p) for p in pts])
    y = np.array([omega(p) for p in pts])
    a, *_ = np.linalg.lstsq(X, y, rcond=None)
    if np.max(np.abs(X @ a - y)) > tol * (1.0 + np.max(np.abs(y))):
        return None
    return a


def totally_geodesic_check(
    m: MetricModel,
    f: ScalarField,
    samples: int = 20,
    s_len: float = 5.0,
    seed: int = 0,
    tol: float = 1e-10,
) -> tuple[float, int]:
    """Max |omega| along geodesics started tangent to the zero level of omega.

    Returns (deviation, runs).  Start points are projected onto omega = 0
    and velocities onto ker d omega.  On a quadric where omega is linear in
    the ambient coordinates the geodesics are integrated in ambient space,
    so they are not limited by the chart.
    """
    rng = np.random.default_rng(seed)
    coeffs = ambient_coefficients(m, f.omega) if isinstance(m, Quadric) else None
    worst = 0.0
    runs = 0
    tries = 0
    while runs < samples:
        tries += 1
        if tries > 50 * samples:
            raise GeometryError("no zero-level points of omega found in the domain")
        p = sample_points(m, rng, 1)[0]
        q = _project_to_level(m, f, p, 0.0)
        if q is None:
            continue
        d = eval_jet2(f.omega, q).grad
        v = rng.normal(size=m.dim)
        v -= (d @ v) / (d @ d) * d
        v /= np.linalg.norm(v)
        if coeffs is not None:
            X0 = m.embed(q)
            V0 = m.push_forward(q, v)
            traj = integrate_ambient(m, X0, V0, s_len, tol=tol, sample_step=0.05)
            vals = traj.x @ coeffs
        else:
            traj = integrate(m, q, v, s_len, tol=tol, sample_step=0.05)
            if traj.termination is not Termination.BUDGET_REACHED:
                continue
            vals = np.array([f.omega(x) for x in traj.x])
        worst = max(worst, float(np.max(np.abs(vals))))
        runs += 1
    return worst, runs


# --------------------------------------------------------------------------
# asymptotic flatness (kappa > 0, h = 0)


def bump_fiber(amplitude: float = 0.5) -> Custom:
    """Conformally flat plane (1 + a exp(-(x0^2 + x1^2))) (dx0^2 + dx1^2)."""
    phi = f"1 + {_num(amplitude)}*exp(-(x0^2 + x1^2))"
    return Custom(2, (0, 2), [[phi, "0"], ["0", phi]])


@dataclass
class FlatnessReport:
    sigma: list[float]
    fiber_curvature: list[float]
    exponent: float
    sigma_min: float
    t: list[float]
    total_curvature: list[float]
    kappa: float

    def limit_error(self, t_max: float = -6.0) -> float:
        """Max |K - kappa| over the probed t <= t_max."""
        errs = [abs(k - self.kappa) for t, k in zip(self.t, self.total_curvature) if t <= t_max]
        return max(errs) if errs else math.inf

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "fiber_curvature": self.fiber_curvature,
            "envelope_exponent": self.exponent,
            "sigma_min": self.sigma_min,
            "t": self.t,
            "total_curvature": self.total_curvature,
            "kappa": self.kappa,
        }


def _fiber_decay(fiber: MetricModel, sigma: np.ndarray, directions: int, origin) -> np.ndarray:
    """Max |K| over unit-speed fiber geodesics from ``origin`` at distance sigma."""
    origin = np.asarray(origin, dtype=float)
    g0 = fiber.metric(origin)
    best = np.zeros(len(sigma))
    for k in range(directions):
        th = 2.0 * math.pi * k / directions
        v = np.array([math.cos(th), math.sin(th)] + [0.0] * (fiber.dim - 2))
        v /= math.sqrt(v @ g0 @ v)
        traj = integrate(fiber, origin, v, float(sigma[-1]) + 0.5, sample_step=0.01)
        for i, s in enumerate(sigma):
            j = int(np.searchsorted(traj.s, s))
            if j >= len(traj.s):
                raise GeometryError(f"fiber geodesic stopped at s = {traj.s_end} before sigma = {s}")
            p = traj.x[j]
            K = sectional(fiber, p, np.eye(fiber.dim)[0], np.eye(fiber.dim)[1])
            best[i] = max(best[i], abs(K))
    return best


def envelope_exponent(sigma: np.ndarray, values: np.ndarray, sigma_min: float) -> float:
    """Least-squares slope of log(upper envelope) against log(sigma) for sigma >= sigma_min."""
    sel = sigma >= sigma_min
    if np.count_nonzero(sel) < 2:
        raise ValueError("need at least two sigma values beyond sigma_min")
    env = np.maximum.accumulate(values[::-1])[::-1]  # non-increasing upper envelope
    y = np.log(np.maximum(env[sel], 1e-300))
    x = np.log(sigma[sel])
    return float(np.polyfit(x, y, 1)[0])


def asymptotic_flatness_probe(
    kappa: float = 1.0,
    fiber: MetricModel | None = None,
    sigma_grid: Sequence[float] | None = None,
    sigma_min: float = 5.0,
    t_grid: Sequence[float] = (-1.0, -2.0, -3.0, -4.0, -5.0, -6.0),
    directions: int = 4,
) -> FlatnessReport:
    """Fiber curvature decay and the curvature limit of -dt^2 + exp(2 sqrt(k) t) g_F.

    The fiber curvature is sampled at geodesic distance sigma from the fiber
    origin.  The total-space curvature of the fiber plane,
    (K_F + kappa alpha^2) / alpha^2, is evaluated along a null geodesic that
    runs to t = -infinity.
    """
    if fiber is None:
        fiber = bump_fiber()
    if fiber.dim != 2:
        raise ValueError("the probe needs a 2-dimensional fiber")
    sigma = np.asarray(sigma_grid if sigma_grid is not None else np.linspace(1.0, 10.0, 19), dtype=float)
    origin = np.zeros(2)
    decay = _fiber_decay(fiber, sigma, directions, origin)
    expo = envelope_exponent(sigma, decay, sigma_min)

    bundle = build_instance("thm4.3", kappa, 0.0, fiber=fiber, verify=False)
    m = bundle.model
    assert isinstance(m, Warped)
    p0 = np.array([0.0, 0.3, 0.0])
    gF = fiber.metric(p0[1:])
    u = np.array([1.0, 0.0])
    u /= math.sqrt(u @ gF @ u)
    v0 = np.concatenate([[-1.0], u])  # alpha(0) = 1, so <v0, v0> = -1 + 1 = 0
    traj = integrate(m, p0, v0, 10.0, sample_step=1e-3)
    ts, Ks = [], []
    for t in sorted(t_grid, reverse=True):
        idx = np.flatnonzero(traj.x[:, 0] <= t)
        if idx.size == 0:
            raise GeometryError(f"null geodesic did not reach t = {t} (ended at {traj.x[-1, 0]})")
        p = traj.x[idx[0]]
        K = warped_sectional(m, p, "fiber-fiber", np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
        ts.append(float(p[0]))
        Ks.append(float(K))
    return FlatnessReport(
        sigma=[float(s) for s in sigma],
        fiber_curvature=[float(k) for k in decay],
        exponent=expo,
        sigma_min=float(sigma_min),
        t=ts,
        total_curvature=Ks,
        kappa=float(kappa),
    )
