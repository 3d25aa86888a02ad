"""Adaptive Dormand-Prince 5(4) integrator with dense output and exit events.

The solver is generic: ``rhs(y) -> dy/ds`` for an autonomous system.  It
records dense-output samples on a uniform grid, stops when an ``inside``
predicate fails (locating the exit by bisection on the interpolant) and
reports step-size underflow, the signature of a finite-parameter blow-up.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .manifold import GeometryError

__all__ = ["DormandPrince", "OdeResult", "solve"]


class DormandPrince:
    """Butcher tableau, error weights and dense-output matrix of DOPRI5."""

    order = 5
    error_order = 4
    n_stages = 6
    C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
    A = np.array(
        [
            [0, 0, 0, 0, 0],
            [1 / 5, 0, 0, 0, 0],
            [3 / 40, 9 / 40, 0, 0, 0],
            [44 / 45, -56 / 15, 32 / 9, 0, 0],
            [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0],
            [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
        ]
    )
    B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
    # difference between the 5th and embedded 4th order weights (7 stages, FSAL)
    E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
    # continuous extension: y(s + th) = y + h K^T P [th, th^2, th^3, th^4]
    P = np.array(
        [
            [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
            [0, 0, 0, 0],
            [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
            [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
            [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
            [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
            [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
        ]
    )


@dataclass
class OdeResult:
    s: np.ndarray
    y: np.ndarray
    status: str  # "budget_reached" | "domain_escape" | "step_underflow"
    s_end: float
    y_end: np.ndarray
    steps: int
    rejected: int
    history_s: np.ndarray
    history_y: np.ndarray


class _Reject(Exception):
    pass


def _rms(x: np.ndarray) -> float:
    return math.sqrt(float(x @ x) / x.shape[0])


def solve(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0,
    s_max: float,
    tol: float = 1e-10,
    sample_step: float = 0.01,
    inside: Callable[[np.ndarray], bool] | None = None,
    event_tol: float = 1e-9,
    underflow: float = 1e-13,
    max_steps: int = 2_000_000,
    history: int = 16,
) -> OdeResult:
    """Integrate y' = rhs(y) from s = 0 to ``s_max``.

    Absolute and relative tolerances are both ``tol``.  ``inside(y)`` is
    checked after every accepted step; on failure the first exit is located
    by bisection of the dense interpolant to ``event_tol`` in s.  The run
    stops with ``step_underflow`` once the proposed step falls below
    ``underflow * (1 + |s|)``.  The last ``history`` accepted states are
    returned for divergence diagnostics.
    """
    tab = DormandPrince
    y = np.array(y0, dtype=float)
    n = y.shape[0]
    if s_max <= 0:
        raise ValueError("s_max must be positive")

    def f(z):
        # non-finite derivatives surface as a non-finite error norm below
        try:
            return rhs(z)
        except (GeometryError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise _Reject(str(exc)) from None

    fy = f(y)
    if not np.isfinite(fy).all():
        raise ValueError("non-finite derivative at the initial state")
    h = _initial_step(f, y, fy, tol)
    s = 0.0
    out_s = [0.0]
    out_y = [y.copy()]
    k_next = 1
    hist_s = deque([0.0], maxlen=history)
    hist_y = deque([y.copy()], maxlen=history)
    K = np.empty((tab.n_stages + 1, n))
    rows = [tab.A[i, :i] for i in range(tab.n_stages)]
    steps = rejected = 0
    status = "budget_reached"

    while True:
        remaining = s_max - s
        if remaining <= underflow * (1.0 + abs(s)):
            s = s_max if remaining > 0 else s
            break
        h = min(h, remaining)
        if h < underflow * (1.0 + abs(s)):
            status = "step_underflow"
            break
        if steps + rejected > max_steps:
            raise RuntimeError(f"step budget exhausted at s = {s}")
        try:
            K[0] = fy
            for i in range(1, tab.n_stages):
                K[i] = f(y + h * (rows[i] @ K[:i]))
            y_new = y + h * (tab.B @ K[: tab.n_stages])
            if not np.isfinite(y_new).all():
                raise _Reject("non-finite state")
            K[tab.n_stages] = f(y_new)
        except _Reject:
            rejected += 1
            h *= 0.25
            continue
        err = h * (tab.E @ K)
        en = _rms(err / (tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))))
        if not math.isfinite(en):
            rejected += 1
            h *= 0.25
            continue
        if en > 1.0:
            rejected += 1
            h *= max(0.2, 0.9 * en ** (-1.0 / 5.0))
            continue

        Q = None
        s_new = s + h
        exited = inside is not None and not inside(y_new)
        if exited:
            Q = K.T @ tab.P
            lo, hi = 0.0, 1.0
            while (hi - lo) * h > event_tol:
                mid = 0.5 * (lo + hi)
                if inside(_dense(y, h, Q, np.array([mid]))[0]):
                    lo = mid
                else:
                    hi = mid
            s_new = s + lo * h
            y_new = _dense(y, h, Q, np.array([lo]))[0]
            status = "domain_escape"

        # dense samples on the uniform grid within (s, s_new]
        ks = []
        while k_next * sample_step <= s_new + 1e-15 and k_next * sample_step <= s_max:
            ks.append(k_next * sample_step)
            k_next += 1
        if ks:
            if Q is None:
                Q = K.T @ tab.P
            th = (np.array(ks) - s) / h
            ys = _dense(y, h, Q, th)
            out_s.extend(ks)
            out_y.extend(ys)
        steps += 1
        s, y = s_new, y_new
        hist_s.append(s)
        hist_y.append(y)
        if exited:
            break
        fy = K[tab.n_stages].copy()
        fac = 5.0 if en == 0.0 else min(5.0, 0.9 * en ** (-1.0 / 5.0))
        h *= fac

    if s > out_s[-1]:
        out_s.append(s)
        out_y.append(y.copy())
    return OdeResult(
        s=np.array(out_s),
        y=np.array(out_y),
        status=status,
        s_end=s,
        y_end=y,
        steps=steps,
        rejected=rejected,
        history_s=np.array(hist_s),
        history_y=np.array(hist_y),
    )


def _dense(y: np.ndarray, h: float, Q: np.ndarray, th: np.ndarray) -> np.ndarray:
    th2 = th * th
    powers = np.vstack([th, th2, th2 * th, th2 * th2])
    return y[None, :] + h * (Q @ powers).T


def _initial_step(f, y, fy, tol) -> float:
    scale = tol + tol * np.abs(y)
    d0 = _rms(y / scale)
    d1 = _rms(fy / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    try:
        f1 = f(y + h0 * fy)
    except _Reject:
        return h0
    d2 = _rms((f1 - fy) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100 * h0, h1)
