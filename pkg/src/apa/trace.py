"""Per-iteration trace of an acceleration run, its CSV form, statistics and replay.

Row ``k`` describes iterate ``x^(k)``:

``residual_norm``   ``||r^(k)||_2``
``depth``           ``m_k`` as decided after ``r^(k)`` was computed
``restart``         ``m_k`` was reset to zero by the restart test
``coeff_inf_norm``  ``||c^(k)||_inf`` of the weights used to build ``x^(k+1)``
                    (NaN on the last row, where no step is taken)
``effective_param`` fixed depth ``m``, ``tau``, ``delta``,
                    ``tau^(k-m_k) = T0 ||r^(k-m_k)||^zeta`` or
                    ``delta^(k) = D0 ||r^(k)||^xi``
``elapsed_ns``      wall time since the start of the run

Replay-only columns (written to a sidecar file): ``solve_depth`` (depth actually
used by the coefficient solve, after any degeneracy fallback), ``gap`` and
``step_norm`` (restart-test quantities for row ``k``) and ``event``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = (
    "k",
    "residual_norm",
    "depth",
    "restart",
    "coeff_inf_norm",
    "effective_param",
    "elapsed_ns",
)
REPLAY_COLUMNS = ("k", "solve_depth", "gap", "step_norm", "event")


@dataclass
class Trace:
    p: int
    policy_kind: str = ""
    version: str = "A"
    tol: float = 0.0
    k: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    depth: list = field(default_factory=list)
    restart: list = field(default_factory=list)
    coeff_inf_norm: list = field(default_factory=list)
    effective_param: list = field(default_factory=list)
    elapsed_ns: list = field(default_factory=list)
    solve_depth: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    event: list = field(default_factory=list)
    # filled only when a run is recorded
    iterates: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    coefficients: list = field(default_factory=list)
    manifold_defect: list = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.k)

    def open_row(self, k, rn, depth, restart=False, gap=math.nan, step_norm=math.nan, event="",
                 elapsed_ns=0):
        self.k.append(k)
        self.residual_norm.append(rn)
        self.depth.append(depth)
        self.restart.append(bool(restart))
        self.gap.append(gap)
        self.step_norm.append(step_norm)
        self.event.append(event)
        self.elapsed_ns.append(elapsed_ns)

    def close_row(self, coeff_inf_norm, effective_param, solve_depth, event=""):
        self.coeff_inf_norm.append(coeff_inf_norm)
        self.effective_param.append(effective_param)
        self.solve_depth.append(solve_depth)
        if event:
            self.event[-1] = f"{self.event[-1]}+{event}" if self.event[-1] else event

    @property
    def final_residual(self):
        return self.residual_norm[-1]

    @property
    def iterations(self):
        return self.k[-1]

    # -- CSV --------------------------------------------------------------

    def rows(self):
        for i in range(len(self.k)):
            yield (
                self.k[i],
                self.residual_norm[i],
                self.depth[i],
                int(self.restart[i]),
                self.coeff_inf_norm[i],
                self.effective_param[i],
                self.elapsed_ns[i],
            )

    def replay_rows(self):
        for i in range(len(self.k)):
            yield (self.k[i], self.solve_depth[i], self.gap[i], self.step_norm[i], self.event[i])

    def write_csv(self, path, replay_path=None):
        _write(path, TRACE_COLUMNS, self.rows())
        if replay_path is not None:
            _write(replay_path, REPLAY_COLUMNS, self.replay_rows())

    @classmethod
    def read_csv(cls, path, replay_path, p, policy_kind=""):
        tr = cls(p=p, policy_kind=policy_kind)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            for row in reader:
                tr.k.append(int(row[0]))
                tr.residual_norm.append(float(row[1]))
                tr.depth.append(int(row[2]))
                tr.restart.append(bool(int(row[3])))
                tr.coeff_inf_norm.append(float(row[4]))
                tr.effective_param.append(float(row[5]))
                tr.elapsed_ns.append(int(row[6]))
        with open(replay_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                tr.solve_depth.append(int(row[1]))
                tr.gap.append(float(row[2]))
                tr.step_norm.append(float(row[3]))
                tr.event.append(row[4])
        return tr


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# -- statistics -----------------------------------------------------------


def mean_depth(trace):
    """Average of ``m_k`` over every row of the trace."""
    if len(trace.depth) == 0:
        raise ValueError("empty trace")
    return float(np.mean(trace.depth))


def convergence_rate(trace, window=None):
    """Per-step contraction factor from a least-squares fit of ``log ||r^(k)||`` on ``k``.

    ``window`` is a ``(start, stop)`` pair of row indices (python slice semantics);
    rows from the first exactly-zero residual onward are ignored.
    """
    ks = np.asarray(trace.k if hasattr(trace, "k") else range(len(trace)), dtype=float)
    rn = np.asarray(trace.residual_norm if hasattr(trace, "residual_norm") else trace, dtype=float)
    if window is not None:
        sl = slice(*window)
        ks, rn = ks[sl], rn[sl]
    zeros = np.flatnonzero(rn <= 0.0)
    if zeros.size:
        ks, rn = ks[: zeros[0]], rn[: zeros[0]]
    if rn.size < 3:
        raise ValueError("need at least three positive residual norms to fit a rate")
    slope = np.polyfit(ks, np.log(rn), 1)[0]
    return float(np.exp(slope))


def order_estimates(trace):
    """Successive ratios ``log ||r^(k+1)|| / log ||r^(k)||`` over rows with ``0 < ||r|| < 1``.

    Values persistently above one indicate superlinear convergence; this is a
    diagnostic only.
    """
    rn = np.asarray(trace.residual_norm, dtype=float)
    ok = (rn > 0) & (rn < 1)
    out = []
    for i in range(len(rn) - 1):
        if ok[i] and ok[i + 1]:
            out.append(math.log(rn[i + 1]) / math.log(rn[i]))
    return np.array(out)


# -- replay ---------------------------------------------------------------


@dataclass
class ReplayReport:
    checked: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.mismatches


def _cap_events(trace, i):
    return "cap" in trace.event[i]


def replay_restart_flags(trace):
    """Recompute restart decisions from logged gaps, step norms and ``tau`` values.

    A flag at row ``k+1`` must equal ``solve_depth[k] >= 1 and
    tau_k * step_norm[k+1] > gap[k+1]`` and the logged depth must follow it.
    """
    rep = ReplayReport()
    for i in range(len(trace.k) - 1):
        j = i + 1
        m_used = trace.solve_depth[i]
        tau = trace.effective_param[i]
        fire = m_used >= 1 and tau * trace.step_norm[j] > trace.gap[j]
        if fire != trace.restart[j]:
            rep.mismatches.append((trace.k[j], "restart", trace.restart[j], fire))
        if fire or _cap_events(trace, j):
            expected = 0
        else:
            expected = m_used + 1
        if trace.depth[j] != expected:
            rep.mismatches.append((trace.k[j], "depth", trace.depth[j], expected))
        rep.checked += 1
    return rep


def adaptive_depth(rn_new, rn_hist, eff_hist, m_prev):
    """Largest ``m <= m_prev + 1`` with ``eff_i * ||r_i|| < ||r_new||`` for the ``m`` newest rows.

    ``rn_hist`` / ``eff_hist`` end at row ``k``; the same arithmetic is used at
    runtime and on replay so decisions match bit for bit.
    """
    m = 0
    last = len(rn_hist) - 1
    while m < m_prev + 1:
        i = last - m
        if i < 0 or not (eff_hist[i] * rn_hist[i] < rn_new):
            break
        m += 1
    return m


def replay_adaptive_depths(trace):
    """Recompute every adaptive depth transition from logged residual norms."""
    rep = ReplayReport()
    for i in range(len(trace.k) - 1):
        j = i + 1
        m = adaptive_depth(
            trace.residual_norm[j],
            trace.residual_norm[: i + 1],
            trace.effective_param[: i + 1],
            trace.solve_depth[i],
        )
        m = min(m, trace.p)
        if trace.depth[j] != m:
            rep.mismatches.append((trace.k[j], "depth", trace.depth[j], m))
        rep.checked += 1
    return rep


def replay_retention(trace):
    """Check that every retained row ``i`` of every step satisfied the retention test."""
    rep = ReplayReport()
    for j in range(1, len(trace.k)):
        m = trace.depth[j]
        for i in range(j - m, j):
            rep.checked += 1
            if not (trace.effective_param[i] * trace.residual_norm[i] < trace.residual_norm[j]):
                rep.mismatches.append((trace.k[j], i))
    return rep


def replay_fixed_depths(trace, m):
    rep = ReplayReport()
    cap = trace.p if m is None else min(m, trace.p)
    for i in range(len(trace.k) - 1):
        expected = min(trace.solve_depth[i] + 1, cap)
        if trace.depth[i + 1] != expected:
            rep.mismatches.append((trace.k[i + 1], "depth", trace.depth[i + 1], expected))
        rep.checked += 1
    return rep


def replay_effective_params(trace, policy):
    """Check logged parameters against their defining formula (exact float equality)."""
    rep = ReplayReport()
    for i in range(len(trace.k)):
        expected = policy.effective_param(trace.residual_norm, i, trace.solve_depth[i])
        if trace.effective_param[i] != expected:
            rep.mismatches.append((trace.k[i], trace.effective_param[i], expected))
        rep.checked += 1
    return rep


def replay(trace, policy):
    """Run every replay check that applies to ``policy``."""
    kind = policy.kind
    reps = {"effective_param": replay_effective_params(trace, policy)}
    if kind in ("restarted", "super_restarted"):
        reps["restart"] = replay_restart_flags(trace)
    elif kind in ("adaptive", "super_adaptive"):
        reps["depth"] = replay_adaptive_depths(trace)
        reps["retention"] = replay_retention(trace)
    else:
        reps["depth"] = replay_fixed_depths(trace, policy.m)
    return reps


def restart_taus(trace):
    """``tau`` in force at each restart segment: ``[(k_i, tau^(k_i)), ...]``."""
    out = []
    for i in range(len(trace.k) - 1):
        if trace.solve_depth[i] == 0:
            out.append((trace.k[i], trace.effective_param[i]))
    return out


def depth_bound_violations(trace):
    return [
        (k, m) for k, m in zip(trace.k, trace.depth) if m > min(k, trace.p)
    ]
