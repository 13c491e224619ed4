"""Sliding window of iterates with an incrementally updated thin QR factorization.

The difference matrix ``S`` (p x m) is built from the stored error vectors in one
of two conventions:

* ``DiffMode.FROM_OLDEST``: ``s_i = r_i - r_0`` (restart-test / gamma form)
* ``DiffMode.SUCCESSIVE``:  ``s_i = r_i - r_{i-1}`` (adaptive-depth / alpha form)

``Q`` (p x m, orthonormal columns) and ``R`` (m x m, upper triangular, non-negative
diagonal) satisfy ``S = Q R`` after every operation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

ORTHO_TOL = 1e-12


class DiffMode(enum.Enum):
    FROM_OLDEST = "from_oldest"
    SUCCESSIVE = "successive"


def _sign_fix(Q, R):
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def thin_qr(S):
    """Householder thin QR with a non-negative diagonal in ``R``."""
    p, m = S.shape
    if m == 0:
        return np.zeros((p, 0)), np.zeros((0, 0))
    Q, R = np.linalg.qr(S, mode="reduced")
    return _sign_fix(Q, R)


def _orthogonal_unit(Q):
    # unit vector orthogonal to range(Q), used when an appended column is dependent
    p, m = Q.shape
    if m >= p:
        raise ValueError("cannot extend an orthonormal basis that already spans R^p")
    j = int(np.argmin(np.einsum("ij,ij->i", Q, Q)))
    v = np.zeros(p)
    v[j] = 1.0
    for _ in range(2):
        v -= Q @ (Q.T @ v)
    return v / np.linalg.norm(v)


def qr_append_column(Q, R, s):
    """Append column ``s`` to ``S = QR`` using classical Gram-Schmidt with one
    reorthogonalization pass (CGS2)."""
    p, m = Q.shape
    h = Q.T @ s
    w = s - Q @ h
    h2 = Q.T @ w
    w -= Q @ h2
    h += h2
    rho = np.linalg.norm(w)
    if rho <= 1e-14 * max(np.linalg.norm(s), np.finfo(float).tiny):
        # s (numerically) in range(Q): any unit vector orthogonal to Q completes the basis
        q = _orthogonal_unit(Q)
        rho = float(q @ w)
        if rho < 0:
            q, rho = -q, -rho
    else:
        q = w / rho
    Rn = np.zeros((m + 1, m + 1))
    Rn[:m, :m] = R
    Rn[:m, m] = h
    Rn[m, m] = rho
    return np.column_stack([Q, q]), Rn


def qr_delete_first_columns(Q, R, count=1):
    """Drop the ``count`` leftmost columns of ``S = QR`` (Givens re-triangularization)."""
    if count <= 0:
        return Q, R
    m = R.shape[1]
    if count >= m:
        return np.zeros((Q.shape[0], 0)), np.zeros((0, 0))
    Qn, Rn = scipy.linalg.qr_delete(Q, R, 0, count, which="col", overwrite_qr=False, check_finite=False)
    k = m - count
    return _sign_fix(Qn[:, :k], np.triu(Rn[:k, :]))


@dataclass
class IterateHistory:
    """Stored iterates ``x^(k-m_k) .. x^(k)``, their errors and (optionally) ``g`` values.

    Difference columns and their QR factorization are kept in sync by
    :meth:`push` and :meth:`truncate_oldest`.
    """

    n: int
    p: int
    diff_mode: DiffMode = DiffMode.SUCCESSIVE
    iterates: list = field(default_factory=list)
    g_values: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    Q: np.ndarray = None
    R: np.ndarray = None
    rebuilds: int = 0

    def __post_init__(self):
        if self.Q is None:
            self.Q = np.zeros((self.p, 0))
            self.R = np.zeros((0, 0))

    def __len__(self):
        return len(self.iterates)

    @property
    def depth(self):
        """``m_k``: stored iterates minus one (``-1`` when empty)."""
        return len(self.iterates) - 1

    def differences(self):
        """Difference matrix ``S`` recomputed from the stored errors."""
        E = self.errors
        if len(E) < 2:
            return np.zeros((self.p, 0))
        if self.diff_mode is DiffMode.FROM_OLDEST:
            cols = [e - E[0] for e in E[1:]]
        else:
            cols = [E[i] - E[i - 1] for i in range(1, len(E))]
        return np.column_stack(cols)

    def _new_column(self, r):
        if not self.errors:
            return None
        if self.diff_mode is DiffMode.FROM_OLDEST:
            return r - self.errors[0]
        return r - self.errors[-1]

    def push(self, x, r, gx=None):
        """Append ``(x, r[, g(x)])`` and update the factorization by one column."""
        x = np.asarray(x, dtype=float)
        r = np.asarray(r, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"iterate has shape {x.shape}, expected ({self.n},)")
        if r.shape != (self.p,):
            raise ValueError(f"error vector has shape {r.shape}, expected ({self.p},)")
        if gx is not None:
            gx = np.asarray(gx, dtype=float)
            if gx.shape != (self.n,):
                raise ValueError(f"g value has shape {gx.shape}, expected ({self.n},)")
        s = self._new_column(r)
        if s is not None:
            if self.Q.shape[1] >= self.p:
                raise ValueError(f"history depth cannot exceed the error dimension p={self.p}")
            self.Q, self.R = qr_append_column(self.Q, self.R, s)
        self.iterates.append(x)
        self.errors.append(r)
        self.g_values.append(gx)
        if s is not None:
            self._guard()
        return self

    def truncate_oldest(self, keep):
        """Keep only the ``keep`` most recent entries (``keep=0`` empties the history)."""
        size = len(self.iterates)
        if keep < 0 or keep > size:
            raise ValueError(f"keep={keep} outside [0, {size}]")
        if keep == size:
            return self
        drop = size - keep
        del self.iterates[:drop]
        del self.errors[:drop]
        del self.g_values[:drop]
        if keep <= 1:
            self.Q = np.zeros((self.p, 0))
            self.R = np.zeros((0, 0))
        elif self.diff_mode is DiffMode.SUCCESSIVE:
            self.Q, self.R = qr_delete_first_columns(self.Q, self.R, drop)
            self._guard()
        else:
            # every column depends on the pivot r_0, which just changed
            self.refactorize()
        return self

    def reset_to_last(self):
        """Restart: keep only the newest iterate."""
        return self.truncate_oldest(min(1, len(self.iterates)))

    def clear(self):
        return self.truncate_oldest(0)

    def refactorize(self):
        self.Q, self.R = thin_qr(self.differences())
        self.rebuilds += 1

    def orthogonality_defect(self):
        m = self.Q.shape[1]
        return float(np.linalg.norm(self.Q.T @ self.Q - np.eye(m)))

    def _guard(self):
        if self.orthogonality_defect() > ORTHO_TOL:
            self.refactorize()

    def residual_projection_gap(self, s_new):
        """``(||(I - P) s_new||, ||s_new||)`` with ``P`` the orthogonal projector onto
        the span of the stored difference columns."""
        s_new = np.asarray(s_new, dtype=float)
        norm = float(np.linalg.norm(s_new))
        if self.Q.shape[1] == 0:
            return norm, norm
        gap = float(np.linalg.norm(s_new - self.Q @ (self.Q.T @ s_new)))
        return gap, norm
