"""Independent reference implementations used to certify the acceleration code.

Everything here is deliberately naive dense linear algebra; nothing is shared
with the QR-updating path in :mod:`apa.history`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from apa.coefficients import DegenerateHistoryError
from apa.driver import DivergenceError, Fixed, accelerate

STAGNATION_TOL = 1e-14


@dataclass
class GMRESResult:
    iterates: list
    residual_norms: list
    stagnated_at: int | None = None
    breakdown: bool = False


def gmres_full(A, b, x0, k_max=None, tol=0.0):
    """Full-memory GMRES (Arnoldi with modified Gram-Schmidt plus one reorthogonalization).

    Returns every iterate ``x^(0..K)`` and the true residual norms
    ``||b - A x^(j)||``.  ``stagnated_at`` is the first ``j`` with
    ``||r_j|| >= (1 - 1e-14) ||r_{j-1}||``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = A.shape[0]
    k_max = n if k_max is None else min(k_max, n)
    r0 = b - A @ x0
    beta = np.linalg.norm(r0)
    res = GMRESResult([x0.copy()], [float(beta)])
    if beta == 0.0:
        return res
    V = np.zeros((n, k_max + 1))
    H = np.zeros((k_max + 1, k_max))
    V[:, 0] = r0 / beta
    for j in range(k_max):
        w = A @ V[:, j]
        for _ in range(2):
            for i in range(j + 1):
                hij = V[:, i] @ w
                H[i, j] += hij
                w -= hij * V[:, i]
        h_next = np.linalg.norm(w)
        H[j + 1, j] = h_next
        breakdown = h_next <= 1e-14 * np.linalg.norm(H[: j + 2, j])
        if not breakdown:
            V[:, j + 1] = w / h_next
        e1 = np.zeros(j + 2)
        e1[0] = beta
        y, *_ = np.linalg.lstsq(H[: j + 2, : j + 1], e1, rcond=None)
        x = x0 + V[:, : j + 1] @ y
        rn = float(np.linalg.norm(b - A @ x))
        if res.stagnated_at is None and rn >= (1.0 - STAGNATION_TOL) * res.residual_norms[-1]:
            res.stagnated_at = j + 1
        res.iterates.append(x)
        res.residual_norms.append(rn)
        if breakdown:
            res.breakdown = True
            break
        if rn <= tol:
            break
    return res


@dataclass
class EquivalenceReport:
    status: str
    combination_deviation: float = 0.0
    image_deviation: float = 0.0
    steps_checked: int = 0
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status == "PASS"


def certify_gmres_equivalence(problem, x0, k_max=None, tol=1e-8, stop_residual=1e-10):
    """Check ``x_GMRES^(k) = sum_i c_i^(k) x_DIIS^(i)`` and ``x_DIIS^(k+1) = g(x_GMRES^(k))``.

    DIIS is run with full history (version A); comparison stops once the DIIS
    error norm reaches ``stop_residual``.  Returns ``INCONCLUSIVE`` when GMRES
    stagnates inside the compared range.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = problem.n
    k_max = n if k_max is None else k_max
    gm = gmres_full(problem.A, problem.b, x0, k_max)
    try:
        _, tr = accelerate(problem, x0, tol=stop_residual, policy=Fixed(None), version="A",
                           max_iter=k_max, record=True)
    except (DivergenceError, DegenerateHistoryError) as exc:
        if gm.stagnated_at is not None:
            return EquivalenceReport("INCONCLUSIVE", notes=[f"GMRES stagnates at step {gm.stagnated_at}", str(exc)])
        return EquivalenceReport("FAIL", notes=[str(exc)])

    rep = EquivalenceReport("PASS")
    last = min(len(tr.coefficients), len(gm.iterates)) - 1
    for k in range(last + 1):
        if tr.residual_norm[k] <= stop_residual:
            break
        if gm.stagnated_at is not None and k >= gm.stagnated_at:
            rep.status = "INCONCLUSIVE"
            rep.notes.append(f"GMRES stagnates at step {gm.stagnated_at}")
            break
        if tr.solve_depth[k] != k:
            rep.status = "FAIL"
            rep.notes.append(f"DIIS history was truncated at step {k} (depth {tr.solve_depth[k]})")
            break
        xg = gm.iterates[k]
        c = tr.coefficients[k]
        comb = sum(ci * xi for ci, xi in zip(c, tr.iterates[: k + 1]))
        scale = max(np.linalg.norm(xg), np.finfo(float).tiny)
        d1 = np.linalg.norm(xg - comb) / scale
        x_next = tr.iterates[k + 1]
        d2 = np.linalg.norm(x_next - problem.g(xg)) / max(np.linalg.norm(x_next), np.finfo(float).tiny)
        rep.combination_deviation = max(rep.combination_deviation, float(d1))
        rep.image_deviation = max(rep.image_deviation, float(d2))
        rep.steps_checked += 1
    if rep.status == "PASS" and max(rep.combination_deviation, rep.image_deviation) > tol:
        rep.status = "FAIL"
    return rep


def _history_matrices(iterates, errors):
    X = np.column_stack(iterates)
    E = np.column_stack(errors)
    return np.diff(X, axis=1), np.diff(E, axis=1)


def multisecant_step(history, r_k=None, kind="II"):
    """Quasi-Newton step ``x^(k) - G^(k) r^(k)`` from the stored history.

    ``Y`` holds successive iterate differences and ``S`` successive error
    differences.  Type II uses ``G = -I + (Y + S)(S^T S)^{-1} S^T``; type I uses
    the Sherman-Morrison-Woodbury inverse ``-I + (Y + S)(Y^T S)^{-1} Y^T``.
    """
    if history.n != history.p:
        raise ValueError("multisecant identification needs n == p")
    xk = history.iterates[-1]
    r_k = history.errors[-1] if r_k is None else np.asarray(r_k, dtype=float)
    if history.depth == 0:
        return xk + r_k
    Y, S = _history_matrices(history.iterates, history.errors)
    if kind == "II":
        left, right = S, S
    elif kind == "I":
        left, right = Y, S
    else:
        raise ValueError(f"kind must be 'I' or 'II', got {kind!r}")
    M = left.T @ right
    if np.linalg.matrix_rank(S) < S.shape[1] or np.linalg.matrix_rank(M) < M.shape[0]:
        raise DegenerateHistoryError(f"type-{kind} secant system is rank deficient")
    lu = scipy.linalg.lu_factor(M)
    coeffs = scipy.linalg.lu_solve(lu, left.T @ r_k)
    step = -r_k + (Y + S) @ coeffs  # G r_k
    return xk - step


def secant_matrix(history, kind="II"):
    """Dense ``G^(k)`` (type II) or ``(B^(k))^{-1}`` (type I)."""
    Y, S = _history_matrices(history.iterates, history.errors)
    left = S if kind == "II" else Y
    M = left.T @ S
    return -np.eye(history.n) + (Y + S) @ np.linalg.solve(M, left.T)


def affine_independence_diagnostics(errors):
    """Distances ``d_l`` from ``r^(l)`` to the affine hull of ``r^(0..l-1)``, ``l >= 1``.

    With ``s_i = r_i - r_0`` these are the moduli of the diagonal of ``R`` in a
    QR factorization of ``[s_1, ..., s_m]``.
    """
    E = [np.asarray(e, dtype=float) for e in errors]
    if len(E) < 2:
        raise ValueError("need at least two error vectors")
    S = np.column_stack([e - E[0] for e in E[1:]])
    out = []
    for ell in range(1, S.shape[1] + 1):
        v = S[:, ell - 1]
        if ell == 1:
            out.append(float(np.linalg.norm(v)))
            continue
        B = S[:, : ell - 1]
        Qb, _ = np.linalg.qr(B)
        w = v - Qb @ (Qb.T @ v)
        w -= Qb @ (Qb.T @ w)
        out.append(float(np.linalg.norm(w)))
    return out


def restart_segment_diagnostics(trace, tau=None):
    """Lower-bound check ``d_l >= tau (1 - mu) ||r^(k-m_k)||`` between restarts.

    ``mu`` is the regression rate of the whole trace.  Requires a recorded
    trace.  Returns one dict per segment; informative only.
    """
    from apa.trace import convergence_rate

    if not trace.errors:
        raise ValueError("trace was not recorded")
    try:
        mu = convergence_rate(trace)
    except ValueError:
        mu = float("nan")
    out = []
    start = 0
    n_rows = len(trace.k)
    for j in range(1, n_rows + 1):
        if j == n_rows or trace.depth[j] == 0:
            seg = trace.errors[start:j]
            if len(seg) >= 2:
                d = affine_independence_diagnostics(seg)
                t = trace.effective_param[start] if tau is None else tau
                bound = t * (1.0 - mu) * trace.residual_norm[start]
                out.append({"start": trace.k[start], "length": len(seg), "min_d": min(d),
                            "bound": bound, "holds": min(d) >= bound})
            start = j
    return out


def stagnating_instance(n=6):
    """Cyclic-shift system whose GMRES residual stays constant for ``n - 1`` steps."""
    from apa.problems import LinearProblem

    A = np.roll(np.eye(n), 1, axis=0)
    b = np.zeros(n)
    b[0] = 1.0
    return LinearProblem(A, b, 0.5, name="stagnating"), np.zeros(n)
