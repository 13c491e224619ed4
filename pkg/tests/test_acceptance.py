"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from apa.certify import (
    bundled_linear_suite,
    multisecant_deviations,
    random_coefficient_instance,
    three_forms,
    toy_scf_suite,
)
from apa.driver import Adaptive, Fixed, Restarted, SuperAdaptive, SuperRestarted, accelerate
from apa.history import DiffMode, IterateHistory
from apa.oracles import certify_gmres_equivalence
from apa.trace import convergence_rate, depth_bound_violations, mean_depth, order_estimates, replay


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def depth_policies(p):
    return [
        Restarted(1e-4),
        Adaptive(1e-4),
        SuperRestarted(1.0, 1.0 / (2 * p + 1)),
        SuperAdaptive(1.0, math.sqrt(2.0) - 1.0),
    ]


@pytest.fixture(scope="module")
def toy_baselines():
    out = []
    for pr in toy_scf_suite():
        x0 = pr.initial_guess()
        _, base = accelerate(pr, x0, 1e-8, Fixed(0), "P", max_iter=200)
        out.append((pr, x0, base, base.converged and convergence_rate(base) < 1.0))
    return out


@pytest.fixture(scope="module")
def bundled_runs(toy_baselines):
    """Every (instance, depth policy) run of the bundled linear and toy SCF sets."""
    runs = []
    for pr in bundled_linear_suite():
        for pol in depth_policies(pr.p):
            _, tr = accelerate(pr, np.zeros(pr.n), 1e-10, pol, "A")
            runs.append((pr.name, pol, tr))
    for pr, x0, _, _ in toy_baselines:
        for pol in depth_policies(pr.p):
            _, tr = accelerate(pr, x0, 1e-10, pol, "P", max_iter=200)
            runs.append((pr.name, pol, tr))
    return runs


def test_criterion_01_gmres_equivalence(report):
    start = time.perf_counter()
    suite = bundled_linear_suite()
    reps = [certify_gmres_equivalence(pr, np.zeros(pr.n), tol=1e-8, stop_residual=1e-10) for pr in suite]
    elapsed = time.perf_counter() - start
    dev = max(max(r.combination_deviation, r.image_deviation) for r in reps)
    ns = sorted({pr.n for pr in suite})
    ok = len(suite) == 20 and ns == [10, 30, 50] and all(r.passed for r in reps) and dev <= 1e-8 and elapsed < 10
    report(1, ok, f"{sum(r.passed for r in reps)}/{len(reps)} instances, max rel deviation {dev:.2e}, "
                  f"runtime {elapsed:.2f} s")


def test_criterion_02_formulation_agreement(report):
    rng = np.random.default_rng(2024)
    worst_c = worst_sum = 0.0
    for _ in range(100):
        errors = random_coefficient_instance(rng, p_max=32, m_max=6)
        assert len(errors[0]) <= 32 and len(errors) - 1 <= 6
        lag, gam, alp = three_forms(errors)
        worst_c = max(worst_c, np.max(np.abs(lag.c - gam.c)), np.max(np.abs(lag.c - alp.c)),
                      np.max(np.abs(gam.c - alp.c)))
        worst_sum = max(worst_sum, *(abs(c.c.sum() - 1.0) for c in (lag, gam, alp)))
    report(2, worst_c <= 1e-8 and worst_sum <= 1e-12,
           f"100 instances, max |dc| {worst_c:.2e}, max |sum c - 1| {worst_sum:.2e}")


def test_criterion_03_multisecant_identity(report):
    worst = max(max(multisecant_deviations(seed)) for seed in range(50))
    report(3, worst <= 1e-8, f"50 instances, max relative step deviation {worst:.2e}")


def test_criterion_04_depth_bound(report, bundled_runs):
    bad = [(name, pol.kind, depth_bound_violations(tr)) for name, pol, tr in bundled_runs
           if depth_bound_violations(tr)]
    steps = sum(len(tr.k) for _, _, tr in bundled_runs)
    report(4, not bad, f"{len(bundled_runs)} runs, {steps} steps, {len(bad)} runs violating m_k <= min(k, p)")


def test_criterion_05_criterion_replay(report, bundled_runs):
    checked, bad = 0, []
    for name, pol, tr in bundled_runs:
        for key, rep in replay(tr, pol).items():
            if key == "effective_param":
                continue
            checked += rep.checked
            if not rep.ok:
                bad.append((name, pol.kind, key, rep.mismatches[:2]))
    restarts = sum(sum(tr.restart) for _, pol, tr in bundled_runs if "restarted" in pol.kind)
    report(5, not bad, f"{checked} decisions replayed ({restarts} restarts), {len(bad)} mismatching runs")


def test_criterion_06_manifold_preservation(report, toy_baselines):
    worst_idem = worst_tr = 0.0
    failures, eligible = [], 0
    for pr, x0, base, contracts in toy_baselines:
        for pol in [Fixed(8), Restarted(1e-4), Adaptive(1e-4)]:
            _, tr = accelerate(pr, x0, 1e-8, pol, "P", max_iter=200, record=True)
            for x in tr.iterates:
                st = pr.state(x)
                worst_idem = max(worst_idem, st.idempotency_defect())
                worst_tr = max(worst_tr, st.trace_defect())
            if contracts:
                eligible += 1
                if not (tr.converged and len(tr.k) - 1 <= 200):
                    failures.append((pr.name, pol.kind))
    excluded = [pr.name for pr, _, _, c in toy_baselines if not c]
    ok = worst_idem <= 1e-10 and worst_tr <= 1e-10 and not failures
    report(6, ok, f"max ||DSD-D|| {worst_idem:.1e}, max |tr(SD)-N| {worst_tr:.1e}, "
                  f"{eligible - len(failures)}/{eligible} runs converged; "
                  f"non-contracting baselines excluded from convergence: {excluded}")


def test_criterion_07_acceleration(report, toy_baselines):
    lines, ok = [], True
    for pr, x0, base, contracts in toy_baselines:
        if not contracts:
            continue
        k_hat, it0 = convergence_rate(base), base.iterations
        _, rs = accelerate(pr, x0, 1e-8, Restarted(1e-4), "P", max_iter=200)
        _, ad = accelerate(pr, x0, 1e-8, Adaptive(1e-4), "P", max_iter=200)
        for tr in (rs, ad):
            ok &= tr.converged and tr.iterations <= it0 and convergence_rate(tr) <= k_hat
        ok &= mean_depth(ad) <= 8
        lines.append(f"{pr.name}: {it0}/{rs.iterations}/{ad.iterations}")
    report(7, ok and bool(lines), f"{len(lines)} instances, iterations Fixed(0)/Restarted/Adaptive: "
                                  + ", ".join(lines))


def test_criterion_08_version_coincidence(report):
    worst_r = worst_x = 0.0
    same_depths = True
    for pr in bundled_linear_suite():
        for pol in [Fixed(None), Fixed(5), Restarted(1e-4), Adaptive(1e-4)]:
            _, a = accelerate(pr, np.zeros(pr.n), 1e-10, pol, "A", record=True)
            _, b = accelerate(pr, np.zeros(pr.n), 1e-10, pol, "P", record=True)
            same_depths &= a.depth == b.depth and a.restart == b.restart
            if len(a.k) != len(b.k):
                same_depths = False
                continue
            worst_r = max(worst_r, max(abs(u - v) for u, v in zip(a.residual_norm, b.residual_norm)))
            worst_x = max(worst_x, max(np.linalg.norm(u - v) / max(1.0, np.linalg.norm(u))
                                       for u, v in zip(a.iterates, b.iterates)))
    ok = same_depths and worst_r <= 1e-10 and worst_x <= 1e-10
    report(8, ok, f"identical depth/restart sequences: {same_depths}, max |residual diff| {worst_r:.1e}, "
                  f"max relative iterate diff {worst_x:.1e}")


def test_criterion_09_superlinear_policies(report, toy_baselines):
    failures, checked, orders = [], 0, []
    problems = [(pr, np.zeros(pr.n), "A") for pr in bundled_linear_suite()]
    problems += [(pr, x0, "P") for pr, x0, _, contracts in toy_baselines if contracts]
    for pr, x0, version in problems:
        for pol in depth_policies(pr.p)[2:]:
            _, tr = accelerate(pr, x0, 1e-10, pol, version, max_iter=500)
            rep = replay(tr, pol)["effective_param"]
            checked += rep.checked
            if not (tr.converged and rep.ok):
                failures.append((pr.name, pol.kind))
            est = order_estimates(tr)
            if est.size:
                orders.append(float(np.median(est[-3:])))
    excluded = [pr.name for pr, _, _, c in toy_baselines if not c]
    report(9, not failures,
           f"{len(problems) * 2 - len(failures)}/{len(problems) * 2} runs reach 1e-10, "
           f"{checked} effective parameters replayed exactly; median late order estimate "
           f"{np.median(orders):.2f} (diagnostic); excluded non-contracting: {excluded}")


def test_criterion_10_qr_maintenance(report):
    rng = np.random.default_rng(10)
    p = 12
    worst_fact = worst_orth = 0.0
    hists = [IterateHistory(p, p, DiffMode.SUCCESSIVE), IterateHistory(p, p, DiffMode.FROM_OLDEST)]
    for h in hists:
        for _ in range(1000):
            if h.depth < p and (len(h) < 2 or rng.random() < 0.65):
                # occasional near-dependent columns stress the updates
                r = rng.standard_normal(p)
                if len(h) >= 2 and rng.random() < 0.1:
                    r = h.errors[-1] + 1e-9 * rng.standard_normal(p)
                h.push(rng.standard_normal(p), r)
            else:
                h.truncate_oldest(int(rng.integers(0, len(h) + 1)))
            S = h.differences()
            if S.shape[1]:
                worst_fact = max(worst_fact, np.linalg.norm(S - h.Q @ h.R) / np.linalg.norm(S))
                worst_orth = max(worst_orth, h.orthogonality_defect())
    report(10, worst_fact <= 1e-10 and worst_orth <= 1e-11,
           f"2 x 1000 operations, max ||S-QR||/||S|| {worst_fact:.1e}, max ||Q^TQ-I|| {worst_orth:.1e}")
