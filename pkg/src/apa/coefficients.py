"""Extrapolation coefficients in the constrained, gamma, alpha and theta forms.

Every solver returns constrained weights ``c`` with ``sum(c) == 1`` so callers
never need to know which parametrization produced them.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from apa.history import DiffMode, IterateHistory

RCOND = 1e-14


class DegenerateHistoryError(np.linalg.LinAlgError):
    """The stored error vectors are (numerically) affinely dependent."""


class Origin(enum.Enum):
    LAGRANGIAN = "lagrangian"
    GAMMA = "gamma"
    ALPHA = "alpha"
    THETA = "theta"


@dataclass(frozen=True)
class Coefficients:
    c: np.ndarray
    origin: Origin

    def __len__(self):
        return len(self.c)

    @property
    def inf_norm(self):
        return float(np.max(np.abs(self.c)))

    def combine(self, vectors):
        """``sum_i c_i v_i`` over a list of equally shaped arrays."""
        out = np.zeros_like(vectors[0], dtype=float)
        for ci, v in zip(self.c, vectors):
            out += ci * v
        return out

    def to_alpha(self):
        """Partial sums ``alpha_i = c_0 + ... + c_{i-1}``, ``i = 1..m``."""
        return np.cumsum(self.c[:-1])

    def to_gamma(self):
        return np.array(self.c[1:])


def from_theta(theta):
    """Anderson's original form: ``c_i = theta_{i+1}`` then ``c_m = 1 - sum(theta)``."""
    theta = np.asarray(theta, dtype=float)
    c = np.append(theta, 1.0 - theta.sum())
    return Coefficients(c, Origin.THETA)


def from_gamma(gamma):
    gamma = np.asarray(gamma, dtype=float)
    c = np.concatenate([[1.0 - gamma.sum()], gamma])
    return Coefficients(c, Origin.GAMMA)


def from_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size == 0:
        return Coefficients(np.ones(1), Origin.ALPHA)
    c = np.concatenate([[alpha[0]], np.diff(alpha), [1.0 - alpha[-1]]])
    return Coefficients(c, Origin.ALPHA)


def solve_lagrangian(errors):
    """Solve the bordered normal-equation system for the DIIS weights.

    Parameters
    ----------
    errors : sequence of (p,) arrays
        ``r^(k-m_k), ..., r^(k)``.

    Returns
    -------
    (Coefficients, float)
        Weights minimizing ``||sum c_i r_i||`` under ``sum c_i = 1`` and the
        multiplier ``lambda`` exactly as it appears in the bordered system
        (border entries ``-1``, right-hand side ``(0, ..., 0, -1)``).
    """
    E = np.column_stack([np.asarray(e, dtype=float) for e in errors])
    m1 = E.shape[1]
    if m1 == 1:
        return Coefficients(np.ones(1), Origin.LAGRANGIAN), float(E[:, 0] @ E[:, 0])
    B = E.T @ E
    M = np.zeros((m1 + 1, m1 + 1))
    M[:m1, :m1] = B
    M[:m1, m1] = -1.0
    M[m1, :m1] = -1.0
    rhs = np.zeros(m1 + 1)
    rhs[m1] = -1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            sol = scipy.linalg.solve(M, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise DegenerateHistoryError(f"bordered DIIS system is singular: {exc}") from exc
    return Coefficients(sol[:m1], Origin.LAGRANGIAN), float(sol[m1])


def _triangular_solve(R, rhs, rcond):
    d = np.abs(np.diag(R))
    if d.max() == 0.0 or d.min() < rcond * d.max():
        raise DegenerateHistoryError(
            f"R is rank deficient (min |R_ii| = {d.min():.3e}, max = {d.max():.3e})"
        )
    return scipy.linalg.solve_triangular(R, rhs)


def solve_gamma(history: IterateHistory, rcond=RCOND):
    """``min ||r_0 + S gamma||`` with ``S`` the from-oldest differences, via stored QR."""
    if history.diff_mode is not DiffMode.FROM_OLDEST:
        raise ValueError("gamma form needs a FROM_OLDEST history")
    if history.depth <= 0:
        return Coefficients(np.ones(1), Origin.GAMMA)
    r0 = history.errors[0]
    gamma = -_triangular_solve(history.R, history.Q.T @ r0, rcond)
    return from_gamma(gamma)


def solve_alpha(history: IterateHistory, rcond=RCOND):
    """``min ||r_k - S alpha||`` with ``S`` the successive differences, via stored QR."""
    if history.diff_mode is not DiffMode.SUCCESSIVE:
        raise ValueError("alpha form needs a SUCCESSIVE history")
    if history.depth <= 0:
        return Coefficients(np.ones(1), Origin.ALPHA)
    rk = history.errors[-1]
    alpha = _triangular_solve(history.R, history.Q.T @ rk, rcond)
    return from_alpha(alpha)


def solve(history: IterateHistory, rcond=RCOND):
    """Dispatch on the history's difference convention."""
    if history.diff_mode is DiffMode.FROM_OLDEST:
        return solve_gamma(history, rcond)
    return solve_alpha(history, rcond)


def residual_of(coeffs: Coefficients, errors):
    """Norm of the extrapolated (linearized) error ``||sum c_i r_i||``."""
    return float(np.linalg.norm(coeffs.combine(list(errors))))
