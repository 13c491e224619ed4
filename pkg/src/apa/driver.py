"""The Anderson-Pulay acceleration loop with pluggable depth policies.

Two ways of forming the next iterate from the weights ``c``:

* version ``"A"``: ``x^(k+1) = sum_i c_i g(x^(k-m_k+i))``
* version ``"P"``: ``x^(k+1) = g(sum_i c_i x^(k-m_k+i))``, which keeps every
  iterate in the range of ``g`` (e.g. on a matrix manifold).
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from apa import coefficients as coef
from apa.history import DiffMode, IterateHistory
from apa.trace import Trace, adaptive_depth, convergence_rate, mean_depth  # noqa: F401


class DivergenceError(RuntimeError):
    """Non-finite iterate or error vector; ``trace`` holds the rows produced so far."""

    def __init__(self, message, trace, x):
        super().__init__(message)
        self.trace = trace
        self.x = x


class Version(str, enum.Enum):
    A = "A"
    P = "P"


@dataclass
class Problem:
    """A fixed-point map ``g: R^n -> R^n`` paired with an error map ``f: R^n -> R^p``."""

    n: int
    p: int
    g: Callable
    f: Callable
    manifold_check: Optional[Callable] = None


# -- depth policies ---------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    """Keep at most ``m`` previous iterates (``m=None`` keeps all of them)."""

    m: Optional[int] = None
    kind = "fixed"
    diff_mode = DiffMode.SUCCESSIVE

    def __post_init__(self):
        if self.m is not None and self.m < 0:
            raise ValueError(f"fixed depth must be >= 0, got {self.m}")

    def validate(self, p):
        pass

    def effective_param(self, rn, k, m_used):
        return math.inf if self.m is None else float(self.m)


@dataclass(frozen=True)
class Restarted:
    tau: float
    kind = "restarted"
    diff_mode = DiffMode.FROM_OLDEST

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")

    def validate(self, p):
        pass

    def effective_param(self, rn, k, m_used):
        return float(self.tau)


@dataclass(frozen=True)
class Adaptive:
    delta: float
    kind = "adaptive"
    diff_mode = DiffMode.SUCCESSIVE

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def validate(self, p):
        pass

    def effective_param(self, rn, k, m_used):
        return float(self.delta)


@dataclass(frozen=True)
class SuperRestarted:
    """Restart test with ``tau^(k-m_k) = T0 * ||r^(k-m_k)||**zeta``."""

    T0: float
    zeta: float
    kind = "super_restarted"
    diff_mode = DiffMode.FROM_OLDEST

    def __post_init__(self):
        if self.T0 <= 0:
            raise ValueError(f"T0 must be positive, got {self.T0}")
        if self.zeta <= 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")

    def validate(self, p):
        if not self.zeta < 1.0 / (2 * p):
            raise ValueError(f"zeta must lie in (0, 1/(2p)) = (0, {1.0 / (2 * p):.6g}), got {self.zeta}")

    def effective_param(self, rn, k, m_used):
        return self.T0 * rn[k - m_used] ** self.zeta


@dataclass(frozen=True)
class SuperAdaptive:
    """Retention test ``delta^(i) ||r^(i)|| < ||r^(k+1)||`` with ``delta^(i) = D0 ||r^(i)||**xi``."""

    D0: float
    xi: float
    kind = "super_adaptive"
    diff_mode = DiffMode.SUCCESSIVE

    def __post_init__(self):
        if self.D0 <= 0:
            raise ValueError(f"D0 must be positive, got {self.D0}")
        if not 0.0 < self.xi <= math.sqrt(2.0) - 1.0:
            raise ValueError(f"xi must lie in (0, sqrt(2)-1], got {self.xi}")

    def validate(self, p):
        pass

    def effective_param(self, rn, k, m_used):
        return self.D0 * rn[k] ** self.xi


POLICIES = {
    cls.kind: cls for cls in (Fixed, Restarted, Adaptive, SuperRestarted, SuperAdaptive)
}


# -- the loop ---------------------------------------------------------------


def _solve(hist, policy, rcond, solver):
    """Coefficients for the current history; shrinks ``hist`` on degeneracy."""
    event = ""
    while True:
        try:
            if solver == "lagrangian":
                c, _ = coef.solve_lagrangian(hist.errors)
            else:
                c = coef.solve(hist, rcond)
            return c, event
        except coef.DegenerateHistoryError:
            event = "degenerate"
            if policy.kind == "fixed":
                hist.truncate_oldest(len(hist) - 1)
            else:
                hist.reset_to_last()


def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def accelerate(
    problem,
    x0,
    tol=1e-8,
    policy=Fixed(None),
    version="A",
    max_iter=500,
    record=False,
    rcond=coef.RCOND,
    solver=None,
):
    """Run Anderson-Pulay acceleration on ``problem`` from ``x0``.

    Parameters
    ----------
    problem : object with ``n``, ``p``, ``g`` and ``f``
    x0 : (n,) array
    tol : float
        Iterate while ``||f(x^(k))||_2 > tol``.
    policy : Fixed | Restarted | Adaptive | SuperRestarted | SuperAdaptive
    version : "A" or "P"
    max_iter : int
    record : bool
        Also store iterates, error vectors and weights in the trace.
    solver : None or "lagrangian"
        ``"lagrangian"`` solves the bordered normal equations instead of the
        QR least-squares form (fixed policy only).

    Returns
    -------
    x_final, Trace

    Raises
    ------
    DivergenceError
        If an iterate or error vector stops being finite.
    """
    version = Version(version)
    policy.validate(problem.p)
    if solver not in (None, "lagrangian"):
        raise ValueError(f"unknown solver {solver!r}")
    if solver == "lagrangian" and policy.kind != "fixed":
        raise ValueError("the Lagrangian solver is only wired for the fixed-depth policy")
    g, f = problem.g, problem.f
    use_g_values = version is Version.A
    check = getattr(problem, "manifold_check", None)

    hist = IterateHistory(problem.n, problem.p, policy.diff_mode)
    trace = Trace(p=problem.p, policy_kind=policy.kind, version=version.value, tol=tol)
    t_start = time.perf_counter_ns()

    x = np.array(x0, dtype=float)
    r = np.asarray(f(x), dtype=float)
    gx = np.asarray(g(x), dtype=float) if use_g_values else None
    if not _finite(x, r) or (gx is not None and not _finite(gx)):
        raise DivergenceError("non-finite initial data", trace, x)
    hist.push(x, r, gx)
    rn = float(np.linalg.norm(r))
    k = 0
    trace.open_row(0, rn, 0, elapsed_ns=time.perf_counter_ns() - t_start)
    if record:
        trace.iterates.append(x)
        trace.errors.append(r)
    if record and check is not None:
        trace.manifold_defect.append(check(x))

    while rn > tol and k < max_iter:
        c, event = _solve(hist, policy, rcond, solver)
        m_used = hist.depth
        eff = policy.effective_param(trace.residual_norm, k, m_used)
        trace.close_row(c.inf_norm, eff, m_used, event)
        if record:
            trace.coefficients.append(c.c)

        if m_used == 0:
            x_new = hist.g_values[-1] if use_g_values else np.asarray(g(hist.iterates[-1]), dtype=float)
        elif use_g_values:
            x_new = c.combine(hist.g_values)
        else:
            x_new = np.asarray(g(c.combine(hist.iterates)), dtype=float)
        r_new = np.asarray(f(x_new), dtype=float)
        gx_new = np.asarray(g(x_new), dtype=float) if use_g_values else None
        if not _finite(x_new, r_new) or (gx_new is not None and not _finite(gx_new)):
            raise DivergenceError(f"non-finite values at step {k + 1}", trace, x_new)
        rn_new = float(np.linalg.norm(r_new))

        restart, gap, step_norm, event = False, math.nan, math.nan, ""
        kind = policy.kind
        if kind == "fixed":
            cap = problem.p if policy.m is None else min(policy.m, problem.p)
            keep = min(m_used + 1, cap)
            if m_used + 1 > problem.p and (policy.m is None or policy.m > problem.p):
                event = "cap"
            hist.truncate_oldest(keep)
        elif kind in ("restarted", "super_restarted"):
            s = r_new - hist.errors[0]
            gap, step_norm = hist.residual_projection_gap(s)
            restart = m_used >= 1 and eff * step_norm > gap
            if restart:
                hist.clear()
            elif m_used + 1 > problem.p:
                event = "cap"
                hist.clear()
        else:
            m_new = adaptive_depth(rn_new, trace.residual_norm, trace.effective_param, m_used)
            if m_new > problem.p:
                m_new, event = problem.p, "cap"
            hist.truncate_oldest(m_new)
        hist.push(x_new, r_new, gx_new)

        k += 1
        rn = rn_new
        trace.open_row(k, rn, hist.depth, restart, gap, step_norm, event,
                       elapsed_ns=time.perf_counter_ns() - t_start)
        if record:
            trace.iterates.append(x_new)
            trace.errors.append(r_new)
        if record and check is not None:
            trace.manifold_defect.append(check(x_new))

    trace.close_row(math.nan, policy.effective_param(trace.residual_norm, k, hist.depth), hist.depth)
    trace.converged = rn <= tol
    return hist.iterates[-1], trace
