"""Oracle and invariant suites behind ``apa certify``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from apa import coefficients as coef
from apa.driver import Adaptive, Fixed, Problem, Restarted, SuperAdaptive, SuperRestarted, accelerate
from apa.history import DiffMode, IterateHistory
from apa.oracles import certify_gmres_equivalence, multisecant_step, stagnating_instance
from apa.problems import make_linear_suite, make_toy_scf
from apa.trace import convergence_rate


@dataclass
class Check:
    name: str
    status: str  # PASS | FAIL | INCONCLUSIVE
    detail: str = ""

    def line(self):
        return f"{self.status:<12} {self.name}  {self.detail}".rstrip()


def bundled_linear_suite():
    """Twenty seeded contractive linear instances with n in {10, 30, 50}."""
    out = []
    for n, seeds in ((10, range(4)), (30, range(3)), (50, range(3))):
        for seed in seeds:
            for pr in make_linear_suite(seed, n, conditioning=10.0):
                pr.name = f"{pr.name}_n{n}_s{seed}"
                out.append(pr)
    return out


def toy_scf_suite(difficulties=(0.5, 1.0), seed=0):
    out = []
    for difficulty in difficulties:
        for d in (4, 6, 8):
            for N in (1, 2, 3):
                pr = make_toy_scf(seed, d, N, difficulty)
                pr.name = f"toy_d{d}_N{N}_q{difficulty}"
                out.append(pr)
    return out


def adaptive_policies(p):
    return [
        Restarted(1e-4),
        Adaptive(1e-4),
        SuperRestarted(1.0, 1.0 / (2 * p + 1)),
        SuperAdaptive(1.0, math.sqrt(2.0) - 1.0),
    ]


def random_coefficient_instance(rng, p_max=32, m_max=6):
    """Error vectors with well-conditioned difference matrices (sigma_min >= 1e-6 sigma_max)."""
    while True:
        p = int(rng.integers(2, p_max + 1))
        m = int(rng.integers(1, min(m_max, p - 1) + 1)) if p > 2 else 1
        errors = [rng.standard_normal(p) for _ in range(m + 1)]
        sv = np.linalg.svd(np.column_stack([e - errors[0] for e in errors[1:]]), compute_uv=False)
        if sv[-1] >= 1e-6 * sv[0]:
            return errors


def history_from(errors, mode):
    p = len(errors[0])
    h = IterateHistory(n=p, p=p, diff_mode=mode)
    for e in errors:
        h.push(np.zeros(p), e)
    return h


def three_forms(errors):
    lag, _ = coef.solve_lagrangian(errors)
    gam = coef.solve_gamma(history_from(errors, DiffMode.FROM_OLDEST))
    alp = coef.solve_alpha(history_from(errors, DiffMode.SUCCESSIVE))
    return lag, gam, alp


def suite_coefficients(count=100, seed=0):
    rng = np.random.default_rng(seed)
    worst_c, worst_sum = 0.0, 0.0
    for _ in range(count):
        errors = random_coefficient_instance(rng)
        forms = three_forms(errors)
        worst_c = max(worst_c, float(np.max(np.abs(forms[0].c - forms[1].c))),
                      float(np.max(np.abs(forms[0].c - forms[2].c))))
        worst_sum = max(worst_sum, *(abs(float(np.sum(f.c)) - 1.0) for f in forms))
    ok = worst_c <= 1e-8 and worst_sum <= 1e-12
    return [Check(f"coefficients: {count} instances agree", "PASS" if ok else "FAIL",
                  f"max |dc| = {worst_c:.2e}, max |sum c - 1| = {worst_sum:.2e}")]


def suite_gmres():
    checks = []
    for pr in bundled_linear_suite():
        rep = certify_gmres_equivalence(pr, np.zeros(pr.n))
        checks.append(Check(f"gmres: {pr.name}", rep.status,
                            f"steps={rep.steps_checked} comb={rep.combination_deviation:.2e} "
                            f"image={rep.image_deviation:.2e}"))
    pr, x0 = stagnating_instance()
    rep = certify_gmres_equivalence(pr, x0)
    checks.append(Check("gmres: stagnating cyclic shift", rep.status, "; ".join(rep.notes)))
    return checks


def smooth_map(seed, n=6):
    """Nonlinear contraction ``g(x) = 0.5 tanh(M x) + b`` paired with ``f = g - id``."""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    M *= 0.9 / np.linalg.norm(M, 2)
    b = rng.standard_normal(n)

    def g(x):
        return 0.5 * np.tanh(M @ x) + b

    return Problem(n, n, g, lambda x: g(x) - x)


def multisecant_deviations(seed, depth=2, steps=6):
    """Compare recorded version-A steps against type-II secant steps on one instance."""
    pr = smooth_map(seed)
    x0 = np.random.default_rng(seed + 1000).standard_normal(pr.n)
    _, tr = accelerate(pr, x0, tol=0.0, policy=Fixed(depth), version="A", max_iter=steps, record=True)
    devs = []
    for k in range(1, len(tr.k) - 1):
        m = tr.solve_depth[k]
        h = IterateHistory(pr.n, pr.p, DiffMode.SUCCESSIVE)
        for x, r in zip(tr.iterates[k - m: k + 1], tr.errors[k - m: k + 1]):
            h.push(x, r)
        qn = multisecant_step(h, kind="II")
        x_next = tr.iterates[k + 1]
        devs.append(float(np.linalg.norm(qn - x_next) / max(np.linalg.norm(x_next), 1e-300)))
    return devs


def suite_multisecant(count=50):
    worst = 0.0
    for seed in range(count):
        worst = max(worst, max(multisecant_deviations(seed)))
    return [Check(f"multisecant: type-II step == Anderson step on {count} instances",
                  "PASS" if worst <= 1e-8 else "FAIL", f"max rel dev = {worst:.2e}")]


def suite_scf_manifold():
    checks = []
    for pr in toy_scf_suite():
        x0 = pr.initial_guess()
        _, base = accelerate(pr, x0, 1e-8, Fixed(0), "P", max_iter=200)
        k_hat = convergence_rate(base)
        if not (base.converged and k_hat < 1.0):
            checks.append(Check(f"scf-manifold: {pr.name}", "INCONCLUSIVE",
                                f"baseline does not contract (K={k_hat:.3f})"))
            continue
        worst, ok = 0.0, True
        for pol in [Fixed(8), Restarted(1e-4), Adaptive(1e-4)]:
            _, tr = accelerate(pr, x0, 1e-8, pol, "P", max_iter=200, record=True)
            worst = max(worst, max(tr.manifold_defect))
            ok &= tr.converged
        ok &= worst <= 1e-10
        checks.append(Check(f"scf-manifold: {pr.name}", "PASS" if ok else "FAIL",
                            f"K={k_hat:.3f} max defect={worst:.1e}"))
    return checks


SUITES = {
    "gmres": suite_gmres,
    "multisecant": suite_multisecant,
    "coefficients": suite_coefficients,
    "scf-manifold": suite_scf_manifold,
}
