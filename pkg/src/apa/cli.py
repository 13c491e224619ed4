"""Command-line harness: ``apa run <config>``, ``apa certify <suite>``, ``apa sweep <config>``.

Config files are TOML with three sections::

    [problem]
    kind = "linear"          # or "toy_scf"
    seed = 0
    n = 30                   # linear only
    conditioning = 10.0      # linear only
    instance = "spd"         # linear only: "spd" | "nonsymmetric"
    # toy_scf: d, N, difficulty, overlap ("gram" | "identity"), warm_steps

    [policy]
    fixed = [5]                              # integers or "inf"
    restarted = [1e-4]                       # tau values
    adaptive = [1e-4]                        # delta values
    super_restarted = [{T0 = 1.0, zeta = "auto"}]   # auto: 1/(2p+1)
    super_adaptive = [{D0 = 1.0, xi = "max"}]       # max: sqrt(2)-1

    [run]
    versions = ["A"]
    tol = 1e-8
    max_iter = 500
    output_dir = "runs"
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from apa.certify import SUITES
from apa.driver import (
    Adaptive,
    DivergenceError,
    Fixed,
    Restarted,
    SuperAdaptive,
    SuperRestarted,
    accelerate,
)
from apa.problems import WellPosednessError, make_linear_suite, make_toy_scf
from apa.trace import REPLAY_COLUMNS, TRACE_COLUMNS, convergence_rate, mean_depth

SUMMARY_COLUMNS = ("run_id", "converged", "iterations", "mean_depth", "rate", "final_residual")
SWEEP_COLUMNS = ("policy", "version", "param", "mean_depth", "rate", "iterations", "converged")
DEFAULT_GRID = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


@dataclass
class RunSpec:
    run_id: str
    policy: object
    version: str


@dataclass
class Config:
    problem: dict
    policies: list
    versions: list
    tol: float
    max_iter: int
    output_dir: str
    text: str = ""
    runs: list = field(default_factory=list)


def _line_of(text, section, key=None):
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", line):
            return no
    return None


PROBLEM_KEYS = {
    "linear": {"kind", "seed", "n", "conditioning", "instance"},
    "toy_scf": {"kind", "seed", "d", "N", "difficulty", "overlap", "warm_steps"},
}
POLICY_KEYS = {"fixed", "restarted", "adaptive", "super_restarted", "super_adaptive"}
RUN_KEYS = {"versions", "tol", "max_iter", "output_dir"}


def build_problem(spec):
    kind = spec["kind"]
    if kind == "linear":
        suite = make_linear_suite(int(spec.get("seed", 0)), int(spec.get("n", 30)),
                                  float(spec.get("conditioning", 10.0)))
        which = spec.get("instance", "spd")
        pr = {p.name: p for p in suite}[which]
        pr.name = f"linear_{which}_n{pr.n}_s{spec.get('seed', 0)}"
        return pr, np.zeros(pr.n)
    pr = make_toy_scf(int(spec.get("seed", 0)), int(spec["d"]), int(spec["N"]),
                      float(spec.get("difficulty", 1.0)), overlap=spec.get("overlap", "gram"))
    pr.name = f"toy_scf_d{pr.d}_N{pr.N}_s{spec.get('seed', 0)}"
    return pr, pr.initial_guess(int(spec.get("warm_steps", 0)))


def _policy_label(pol):
    if pol.kind == "fixed":
        return f"fixed-m{'inf' if pol.m is None else pol.m}"
    if pol.kind == "restarted":
        return f"restarted-tau{pol.tau:g}"
    if pol.kind == "adaptive":
        return f"adaptive-delta{pol.delta:g}"
    if pol.kind == "super_restarted":
        return f"superrestarted-T{pol.T0:g}-zeta{pol.zeta:.6g}"
    return f"superadaptive-D{pol.D0:g}-xi{pol.xi:.6g}"


def _parse_policies(section, p, text):
    pols = []

    def fail(key, msg):
        raise ConfigError(f"[policy] {key}: {msg}", _line_of(text, "policy", key))

    for key, values in section.items():
        if key not in POLICY_KEYS:
            fail(key, f"unknown policy (expected one of {sorted(POLICY_KEYS)})")
        if not isinstance(values, list):
            fail(key, "expected a list of parameter values")
        for v in values:
            try:
                if key == "fixed":
                    pols.append(Fixed(None if v in ("inf", "infinity") else int(v)))
                elif key == "restarted":
                    pols.append(Restarted(float(v)))
                elif key == "adaptive":
                    pols.append(Adaptive(float(v)))
                elif key == "super_restarted":
                    zeta = v.get("zeta", "auto")
                    zeta = 1.0 / (2 * p + 1) if zeta == "auto" else float(zeta)
                    pol = SuperRestarted(float(v.get("T0", 1.0)), zeta)
                    pol.validate(p)
                    pols.append(pol)
                else:
                    xi = v.get("xi", "max")
                    xi = math.sqrt(2.0) - 1.0 if xi == "max" else float(xi)
                    pols.append(SuperAdaptive(float(v.get("D0", 1.0)), xi))
            except (TypeError, ValueError, AttributeError) as exc:
                fail(key, f"bad value {v!r}: {exc}")
    if not pols:
        raise ConfigError("[policy] section lists no policy", _line_of(text, "policy"))
    return pols


def load_config(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None) from exc
    for sec in ("problem", "policy", "run"):
        if sec not in data:
            raise ConfigError(f"missing [{sec}] section", 1)
    prob, pol, run = data["problem"], data["policy"], data["run"]
    kind = prob.get("kind")
    if kind not in PROBLEM_KEYS:
        raise ConfigError(f"[problem] kind must be 'linear' or 'toy_scf', got {kind!r}",
                          _line_of(text, "problem", "kind") or _line_of(text, "problem"))
    for key in prob:
        if key not in PROBLEM_KEYS[kind]:
            raise ConfigError(f"[problem] unknown key {key!r} for kind {kind!r}", _line_of(text, "problem", key))
    if kind == "toy_scf":
        for key in ("d", "N"):
            if key not in prob:
                raise ConfigError(f"[problem] toy_scf needs {key!r}", _line_of(text, "problem"))
    for key in run:
        if key not in RUN_KEYS:
            raise ConfigError(f"[run] unknown key {key!r}", _line_of(text, "run", key))
    try:
        problem, _ = build_problem(prob)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[problem] {exc}", _line_of(text, "problem")) from exc
    policies = _parse_policies(pol, problem.p, text)
    versions = run.get("versions", ["A"])
    for v in versions:
        if v not in ("A", "P"):
            raise ConfigError(f"[run] versions: unknown version {v!r}", _line_of(text, "run", "versions"))
    base = os.path.dirname(os.path.abspath(path))
    out = run.get("output_dir", "runs")
    cfg = Config(
        problem=prob,
        policies=policies,
        versions=list(versions),
        tol=float(run.get("tol", 1e-8)),
        max_iter=int(run.get("max_iter", 500)),
        output_dir=out if os.path.isabs(out) else os.path.join(base, out),
        text=text,
    )
    name = problem.name
    for pol_ in policies:
        for v in cfg.versions:
            cfg.runs.append(RunSpec(f"{name}__{_policy_label(pol_)}__{v}", pol_, v))
    return cfg


def _atomic_write(path, write_fn):
    directory = os.path.dirname(path)
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def execute_run(cfg, spec, write=True):
    """Run one (problem, policy, version) combination; returns its summary row."""
    problem, x0 = build_problem(cfg.problem)
    failure = None
    try:
        _, trace = accelerate(problem, x0, cfg.tol, spec.policy, spec.version, cfg.max_iter)
    except DivergenceError as exc:
        trace, failure = exc.trace, "diverged"
    except WellPosednessError:
        trace, failure = None, "ill-posed"
    if trace is not None and write:
        body = _csv_text(TRACE_COLUMNS, trace.rows())
        side = _csv_text(REPLAY_COLUMNS, trace.replay_rows())
        _atomic_write(os.path.join(cfg.output_dir, f"{spec.run_id}.csv"), lambda fh: fh.write(body))
        _atomic_write(os.path.join(cfg.output_dir, "replay", f"{spec.run_id}.csv"), lambda fh: fh.write(side))
    if trace is None or len(trace.k) == 0:
        return (spec.run_id, 0, 0, math.nan, math.nan, math.nan), failure, trace
    try:
        rate = convergence_rate(trace)
    except ValueError:
        rate = math.nan
    converged = int(failure is None and trace.converged)
    row = (spec.run_id, converged, trace.k[-1], mean_depth(trace), rate, trace.residual_norm[-1])
    return row, failure, trace


def _threads():
    try:
        return max(1, int(os.environ.get("APA_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(config_path, out=None):
    out = sys.stdout if out is None else out
    cfg = load_config(config_path)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda s: execute_run(cfg, s), cfg.runs))
    rows = [r[0] for r in results]
    text = _csv_text(SUMMARY_COLUMNS, rows)
    _atomic_write(os.path.join(cfg.output_dir, "summary.csv"), lambda fh: fh.write(text))
    for (row, failure, _) in results:
        status = failure or ("converged" if row[1] else "not converged")
        print(f"{row[0]}: {status}, {row[2]} iterations, mean depth {row[3]:.2f}", file=out)
    return 0


def parse_grid(text):
    """``"1e-2,1e-4"`` or a decade range ``"1e-2:1e-8"``."""
    if text is None:
        return list(DEFAULT_GRID)
    if ":" in text:
        lo, hi = (float(t) for t in text.split(":"))
        a, b = round(math.log10(lo)), round(math.log10(hi))
        step = -1 if b < a else 1
        return [10.0 ** e for e in range(a, b + step, step)]
    return [float(t) for t in text.split(",") if t.strip()]


def sweep(config_path, grid, out=None):
    out = sys.stdout if out is None else out
    cfg = load_config(config_path)
    kinds = sorted({p.kind for p in cfg.policies if p.kind in ("restarted", "adaptive")}) or ["restarted", "adaptive"]
    specs = []
    for kind in kinds:
        for v in cfg.versions:
            for val in grid:
                pol = Restarted(val) if kind == "restarted" else Adaptive(val)
                specs.append(RunSpec(f"sweep__{_policy_label(pol)}__{v}", pol, v))
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda s: execute_run(cfg, s, write=False), specs))
    rows = []
    for spec, (row, _, _) in zip(specs, results):
        param = spec.policy.tau if spec.policy.kind == "restarted" else spec.policy.delta
        rows.append((spec.policy.kind, spec.version, param, row[3], row[4], row[2], row[1]))
    text = _csv_text(SWEEP_COLUMNS, rows)
    _atomic_write(os.path.join(cfg.output_dir, "sweep.csv"), lambda fh: fh.write(text))
    print(f"{'policy':<10} {'ver':<3} {'param':>8} {'mean_depth':>10} {'rate':>8} {'iters':>6}", file=out)
    for r in rows:
        print(f"{r[0]:<10} {r[1]:<3} {r[2]:>8.0e} {r[3]:>10.2f} {r[4]:>8.4f} {r[5]:>6d}", file=out)
    return 0


def certify(suite, out=None):
    out = sys.stdout if out is None else out
    checks = SUITES[suite]()
    for c in checks:
        print(c.line(), file=out)
    failed = sum(c.status == "FAIL" for c in checks)
    print(f"{suite}: {len(checks)} checks, {failed} failed", file=out)
    return 1 if failed else 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="apa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run every (problem, policy, version) combination of a config")
    p_run.add_argument("config")
    p_cert = sub.add_parser("certify", help="run an oracle/invariant suite")
    p_cert.add_argument("suite", choices=sorted(SUITES))
    p_sweep = sub.add_parser("sweep", help="sweep tau/delta on a log grid")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", default=None,
                         help="comma list or decade range lo:hi (default 1e-2:1e-8)")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.config)
        if args.command == "sweep":
            return sweep(args.config, parse_grid(args.param))
        return certify(args.suite)
    except ConfigError as exc:
        where = f"{args.config}:{exc.line}" if exc.line else args.config
        print(f"{where}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
