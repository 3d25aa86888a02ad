"""Identities satisfied by several Obata functions sharing one kappa.

For Obata functions omega_i the gradients satisfy nabla_X Omega_i = -kappa omega_i X,
which yields closed brackets, constant pair products and totally umbilical
joint level sets.  Every check here measures these quantities from jets and
the Levi-Civita connection rather than assuming them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import Expression, eval_jet2, parse
from .manifold import MetricModel, Quadric, Warped, restrict_linear, sample_points
from .tensor import (
    DegeneratePlaneError,
    ScalarField,
    _connection,
    _hessian_from,
    gradient_derivative,
    riemann,
    sectional_from,
)

__all__ = [
    "bracket_check",
    "pair_constant_check",
    "pair_constants",
    "maximal_system",
    "gradient_rank",
    "RankReport",
    "span_curvature",
    "umbilic_check",
    "UmbilicReport",
    "linear_combination_check",
    "CombinationReport",
]


def _points(m: MetricModel, samples: int, seed: int) -> np.ndarray:
    return sample_points(m, np.random.default_rng(seed), samples)


def _common_kappa(fields: Sequence[ScalarField]) -> float:
    kappas = {f.kappa for f in fields}
    if len(kappas) != 1:
        raise ValueError(f"fields must share one kappa, got {sorted(kappas)}")
    return fields[0].kappa


def bracket_check(m: MetricModel, f1: ScalarField, f2: ScalarField, samples: int = 50, seed: int = 0) -> float:
    """Max |[Omega_1, Omega_2] + kappa omega_2 Omega_1 - kappa omega_1 Omega_2|."""
    k = _common_kappa([f1, f2])
    worst = 0.0
    for p in _points(m, samples, seed):
        O1, D1 = gradient_derivative(m, p, f1)
        O2, D2 = gradient_derivative(m, p, f2)
        br = O1 @ D2 - O2 @ D1
        w1, w2 = f1.omega(p), f2.omega(p)
        worst = max(worst, float(np.max(np.abs(br + k * w2 * O1 - k * w1 * O2))))
    return worst


def pair_constant_check(
    m: MetricModel, f1: ScalarField, f2: ScalarField, samples: int = 50, seed: int = 0
) -> tuple[float, float]:
    """(c12, spread) of <Omega_1, Omega_2> + kappa omega_1 omega_2 over samples."""
    k = _common_kappa([f1, f2])
    vals = []
    for p in _points(m, samples, seed):
        j1, j2 = eval_jet2(f1.omega, p), eval_jet2(f2.omega, p)
        ginv = m.inverse(p)
        vals.append(float(j1.grad @ ginv @ j2.grad) + k * j1.value * j2.value)
    v = np.array(vals)
    return float(v.mean()), float(v.max() - v.min())


def pair_constants(
    m: MetricModel, fields: Sequence[ScalarField], samples: int = 50, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of pair constants c_ij and their spreads."""
    n = len(fields)
    C = np.zeros((n, n))
    S = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            C[i, j], S[i, j] = pair_constant_check(m, fields[i], fields[j], samples, seed)
            C[j, i], S[j, i] = C[i, j], S[i, j]
    return C, S


@dataclass
class RankReport:
    samples: int
    dim: int
    full_rank_fraction: float  # gradients of the whole system span the tangent space
    subset_fraction: float  # every dim-subset is independent
    max_rank: int

    def to_dict(self) -> dict:
        return dict(vars(self))


def _rank(vectors: np.ndarray, rel: float = 1e-8) -> int:
    s = np.linalg.svd(vectors, compute_uv=False)
    return int(np.sum(s > rel * max(1.0, float(s[0]) if s.size else 0.0)))


def maximal_system(
    m: Quadric, samples: int = 100, seed: int = 0, rel: float = 1e-8
) -> tuple[list[Expression], RankReport]:
    """Restrictions of the ambient coordinates and the rank of their gradients."""
    if not isinstance(m, Quadric):
        raise TypeError("maximal_system needs a Quadric model")
    N = m.ambient_signature.dim
    system = [restrict_linear(m, np.eye(N)[i]) for i in range(N)]
    n = m.dim
    full = subsets = 0
    max_rank = 0
    pts = _points(m, samples, seed)
    for p in pts:
        G = np.array([eval_jet2(e, p).grad for e in system])  # differentials, one per row
        r = _rank(G, rel)
        max_rank = max(max_rank, r)
        full += r == n
        subsets += all(_rank(G[list(c)], rel) == n for c in itertools.combinations(range(N), n))
    return system, RankReport(samples, n, full / samples, subsets / samples, max_rank)


def gradient_rank(
    m: MetricModel, fields: Sequence[ScalarField], samples: int = 100, seed: int = 0, rel: float = 1e-8
) -> RankReport:
    """Rank of the gradient system {d omega_i}; full rank is min(#fields, dim)."""
    n = m.dim
    target = min(len(fields), n)
    full = subsets = 0
    max_rank = 0
    for p in _points(m, samples, seed):
        G = np.array([eval_jet2(f.omega, p).grad for f in fields])
        r = _rank(G, rel)
        max_rank = max(max_rank, r)
        full += r == target
        subsets += all(_rank(G[list(c)], rel) == target for c in itertools.combinations(range(len(fields)), target))
    return RankReport(samples, n, full / samples, subsets / samples, max_rank)


def span_curvature(
    m: MetricModel, fields: Sequence[ScalarField], samples: int = 50, seed: int = 0
) -> tuple[float, int, int]:
    """Max |K(Omega_i, Omega_j) - kappa| over pairs and samples.

    Returns (deviation, planes evaluated, degenerate planes skipped).
    """
    k = _common_kappa(fields)
    worst = 0.0
    used = skipped = 0
    for p in _points(m, samples, seed):
        R = riemann(m, p)
        g = m.metric(p)
        ginv = m.inverse(p, g)
        Om = [ginv @ eval_jet2(f.omega, p).grad for f in fields]
        for i, j in itertools.combinations(range(len(fields)), 2):
            try:
                K = sectional_from(R, g, Om[i], Om[j])
            except DegeneratePlaneError:
                skipped += 1
                continue
            used += 1
            worst = max(worst, abs(K - k))
    return worst, used, skipped


# --------------------------------------------------------------------------
# umbilicity of joint level sets


@dataclass
class UmbilicReport:
    deviation: float
    rotated_deviation: float  # same check with a rotated tangent frame
    points: int
    skipped: int

    def to_dict(self) -> dict:
        return dict(vars(self))


def _tangent_frame(g: np.ndarray, normals: np.ndarray) -> np.ndarray | None:
    """Basis of the g-orthogonal complement of the normals, g-orthonormalized.

    Gram-Schmidt over coordinate vectors; returns None when the complement is
    degenerate.
    """
    n = g.shape[0]
    Ginv = np.linalg.inv(normals @ g @ normals.T)
    P = np.eye(n) - normals.T @ Ginv @ normals @ g  # g-orthogonal projector onto the complement
    frame: list[np.ndarray] = []
    signs: list[float] = []
    for e in np.eye(n):
        v = P @ e
        for u, s in zip(frame, signs):
            v = v - s * (u @ g @ v) * u
        q = v @ g @ v
        if abs(q) <= 1e-10 * max(1.0, float(np.abs(v) @ np.abs(g) @ np.abs(v))):
            continue
        frame.append(v / math.sqrt(abs(q)))
        signs.append(math.copysign(1.0, q))
        if len(frame) == n - normals.shape[0]:
            return np.array(frame)
    return None


def _second_fundamental(hessians, G_inv, normals_up, X, Y) -> np.ndarray:
    """II(X, Y) = -sum_ij G^-1_ij H^{omega_j}(X, Y) Omega_i."""
    h = np.array([X @ H @ Y for H in hessians])
    return -(G_inv @ h) @ normals_up


def umbilic_check(
    m: MetricModel,
    fields: Sequence[ScalarField],
    samples: int = 50,
    seed: int = 0,
    levels: Sequence[float] | None = None,
    rel: float = 1e-8,
) -> UmbilicReport:
    """Compare the second fundamental form of a joint level set with
    kappa <X, Y> sum_ij G^-1_ij omega_j Omega_i, G_ij = <Omega_i, Omega_j>.

    The measured form uses <nabla_X Y, Omega_i> = -H^{omega_i}(X, Y) for Y
    tangent to the level set, with the covariant Hessians evaluated from jets
    and the Levi-Civita connection.  With ``levels`` the sample points are
    first moved onto omega_i = levels[i].
    """
    k = _common_kappa(fields)
    kk = len(fields)
    if levels is not None and len(levels) != kk:
        raise ValueError("one level per field is required")
    worst = worst_rot = 0.0
    used = skipped = 0
    rng = np.random.default_rng(seed + 1)
    for p in _points(m, samples, seed):
        if levels is not None:
            p = _project_joint(m, fields, p, levels)
            if p is None:
                skipped += 1
                continue
        g, ginv, _, gamma = _connection(m, p)
        jets = [eval_jet2(f.omega, p) for f in fields]
        dw = np.array([j.grad for j in jets])
        Om = dw @ ginv  # rows Omega_i (ginv symmetric)
        G = Om @ g @ Om.T
        if abs(np.linalg.det(G)) <= rel * max(1.0, float(np.max(np.abs(G)))) ** kk:
            skipped += 1
            continue
        frame = _tangent_frame(g, Om)
        if frame is None:
            skipped += 1
            continue
        G_inv = np.linalg.inv(G)
        Hs = [_hessian_from(j, gamma) for j in jets]
        w = np.array([j.value for j in jets])
        rhs_vec = k * (G_inv @ w) @ Om
        Q, _ = np.linalg.qr(rng.normal(size=(frame.shape[0], frame.shape[0])))
        rotated = Q @ frame
        for F, slot in ((frame, 0), (rotated, 1)):
            dev = 0.0
            for X in F:
                for Y in F:
                    II = _second_fundamental(Hs, G_inv, Om, X, Y)
                    dev = max(dev, float(np.max(np.abs(II - (X @ g @ Y) * rhs_vec))))
            if slot == 0:
                worst = max(worst, dev)
            else:
                worst_rot = max(worst_rot, dev)
        used += 1
    return UmbilicReport(worst, worst_rot, used, skipped)


def _project_joint(m: MetricModel, fields, p: np.ndarray, levels) -> np.ndarray | None:
    """Gauss-Newton projection onto omega_i = levels[i] (minimum-norm steps)."""
    q = p.copy()
    target = np.asarray(levels, dtype=float)
    for _ in range(40):
        jets = [eval_jet2(f.omega, q) for f in fields]
        gap = np.array([j.value for j in jets]) - target
        if np.max(np.abs(gap)) <= 1e-14 * (1.0 + np.max(np.abs(target))):
            return q if m.in_domain(q) else None
        J = np.array([j.grad for j in jets])
        q = q - np.linalg.lstsq(J, gap, rcond=None)[0]
        if not m.in_domain(q):
            return None
    return None


# --------------------------------------------------------------------------
# linear combinations of Obata functions


@dataclass
class CombinationReport:
    coefficients: tuple[float, float]
    singular_values: tuple[float, float]
    rank_defect: float  # max normalized |Omega wedge Omega*|
    samples: int

    def to_dict(self) -> dict:
        return {
            "coefficients": list(self.coefficients),
            "singular_values": list(self.singular_values),
            "rank_defect": self.rank_defect,
            "samples": self.samples,
        }


def linear_combination_check(
    m: Warped, f: ScalarField, samples: int = 50, seed: int = 0, companion: str | None = None
) -> CombinationReport:
    """Search a + b companion, a^2 + b^2 = 1, for the least Obata residual.

    The residual H + kappa omega g is linear in (a, b), so the minimizer is
    the right singular vector of the stacked residual columns with the
    smallest singular value.  The report gives the rank defect of
    {Omega, Omega*} where Omega* is the minimizer's gradient.
    """
    n = m.dim
    k = f.kappa
    if companion is None:
        companion = f"cosh({math.sqrt(abs(k))!r}*x0)"
    c = parse(companion, n)
    pts = _points(m, samples, seed)
    cols: list[list[np.ndarray]] = [[], []]
    for p in pts:
        g, _, _, gamma = _connection(m, p)
        for slot, e in enumerate((f.omega, c)):
            j = eval_jet2(e, p)
            cols[slot].append((_hessian_from(j, gamma) + k * j.value * g).ravel())
    A = np.column_stack([np.concatenate(cols[0]), np.concatenate(cols[1])])
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    a, b = Vt[-1]
    if a < 0:
        a, b = -a, -b
    defect = 0.0
    for p in pts:
        ginv = m.inverse(p)
        O = ginv @ eval_jet2(f.omega, p).grad
        Os = ginv @ (a * eval_jet2(f.omega, p).grad + b * eval_jet2(c, p).grad)
        M = np.outer(O, Os)
        wedge = float(np.max(np.abs(M - M.T)))
        defect = max(defect, wedge / max(np.linalg.norm(O) * np.linalg.norm(Os), 1e-300))
    return CombinationReport((float(a), float(b)), (float(s[0]), float(s[-1])), defect, samples)
