"""Pass/fail checks over oracle runs and sweep results.

Shared by ``dpcq oracle-check``/``dpcq sweep --check`` and the acceptance
tests, so the command line and the test suite judge results identically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tabular_q import q_learning_on_mdp, random_mdp, value_iteration_oracle

__all__ = [
    "CheckResult",
    "oracle_equivalence",
    "check_macro_convergence",
    "check_reward_ordering",
    "check_rf3_capacity_gain",
    "check_cooperation_gain",
    "check_fairness_ordering",
    "check_convergence_speed",
    "run_sweep_checks",
    "ACCEPTANCE_SERIES",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __bool__(self):
        return self.passed


def oracle_equivalence(seeds: Iterable[int] = range(10), steps: int = 100_000, epsilon: float = 0.2,
                       alpha_exponent: float = 0.7, n_states: int = 5, n_actions: int = 3,
                       gamma: float = 0.9, v_tol: float = 0.05, min_pass: int = 9,
                       max_seconds: float = 5.0) -> CheckResult:
    """Q-learning on random MDPs must recover the value-iteration policy.

    A seed passes when the greedy policy matches exactly and
    ``max|V_hat - V*| <= v_tol * max|V*|``.
    """
    seeds = list(seeds)
    t0 = time.perf_counter()
    passed, worst = 0, 0.0
    failures = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, n_states, n_actions, gamma)
        v_star, pi_star = value_iteration_oracle(mdp)
        table = q_learning_on_mdp(mdp, steps, epsilon, rng, alpha_exponent=alpha_exponent)
        v_hat = table.values.max(axis=1)
        err = float(np.max(np.abs(v_hat - v_star)) / np.max(np.abs(v_star)))
        worst = max(worst, err)
        same = bool(np.array_equal(table.values.argmax(axis=1), pi_star))
        if same and err <= v_tol:
            passed += 1
        else:
            failures.append(seed)
    elapsed = time.perf_counter() - t0
    ok = passed >= min(min_pass, len(seeds)) and elapsed < max_seconds
    detail = (f"{passed}/{len(seeds)} seeds match pi* with V within {v_tol:.0%} "
              f"(worst rel. error {worst:.4f}); failing seeds {failures}; {elapsed:.2f}s (limit {max_seconds}s)")
    return CheckResult("C1 oracle equivalence", ok, detail)


# -- sweep-level checks -----------------------------------------------------

ACCEPTANCE_SERIES = {
    "C2": ("RF1-IL",),
    "C3": ("RF1-IL", "RF2(K=80)-IL", "RF2(K=10000)-IL"),
    "C4": ("RF1-IL", "RF3-IL"),
    "C5": ("RF3-IL", "RF3-CL"),
    "C6": ("RF1-IL", "RF3-IL", "RF3-CL"),
    "C7": ("RF1-IL", "RF1-CL"),
}


def _values(points, label, n_femto, key):
    return [p[key] for p in points if p.get("error") is None and p["label"] == label and p["n_femto"] == n_femto]


def _has(points, labels, n_values):
    return all(_values(points, lab, n, "rng_seed") for lab in labels for n in n_values)


def check_macro_convergence(points, n_femto: int = 4, band: float = 0.5, min_seeds: int = 8) -> CheckResult:
    devs = _values(points, "RF1-IL", n_femto, "max_subcarrier_deviation_last300")
    good = sum(d < band for d in devs)
    return CheckResult(
        "C2 macro capacity converges to target (RF1-IL)",
        good >= min_seeds,
        f"{good}/{len(devs)} seeds with every subcarrier's last-300 mean |C_o - target| < {band} "
        f"(need {min_seeds}); per-seed worst deviation {np.round(devs, 3).tolist()}",
    )


def check_reward_ordering(points, n_femto: int = 4) -> CheckResult:
    labels = ("RF1-IL", "RF2(K=80)-IL", "RF2(K=10000)-IL")
    means = [float(np.mean(_values(points, lab, n_femto, "mean_deviation_last300"))) for lab in labels]
    ok = means[0] <= means[1] <= means[2]
    return CheckResult(
        "C3 reward ordering RF1 <= RF2(80) <= RF2(10000)",
        ok,
        ", ".join(f"{lab}={m:.3f}" for lab, m in zip(labels, means)),
    )


def check_rf3_capacity_gain(points, n_values=(4, 7, 11)) -> CheckResult:
    parts, ok = [], True
    for n in n_values:
        rf1 = float(np.mean(_values(points, "RF1-IL", n, "aggregate_capacity")))
        rf3 = float(np.mean(_values(points, "RF3-IL", n, "aggregate_capacity")))
        ok &= rf3 > rf1
        parts.append(f"N={n}: RF3-IL {rf3:.3f} vs RF1-IL {rf1:.3f}")
    return CheckResult("C4 RF3-IL capacity exceeds RF1-IL", ok, "; ".join(parts))


def check_cooperation_gain(points, n_femto: int = 11) -> CheckResult:
    il = float(np.mean(_values(points, "RF3-IL", n_femto, "aggregate_capacity")))
    cl = float(np.mean(_values(points, "RF3-CL", n_femto, "aggregate_capacity")))
    return CheckResult(
        "C5 cooperation raises aggregate capacity (RF3)",
        cl > il,
        f"N={n_femto}: RF3-CL {cl:.3f} vs RF3-IL {il:.3f} (gap {cl - il:+.3f})",
    )


def check_fairness_ordering(points, n_values=(4, 7, 11)) -> CheckResult:
    parts, ok = [], True
    for n in n_values:
        j = {lab: _values(points, lab, n, "jain") for lab in ("RF1-IL", "RF3-IL", "RF3-CL")}
        in_range = all(1.0 / n - 1e-12 <= v <= 1.0 + 1e-12 for vs in j.values() for v in vs)
        m = {lab: float(np.mean(v)) for lab, v in j.items()}
        ok &= in_range and m["RF1-IL"] >= m["RF3-IL"] and m["RF3-CL"] >= m["RF3-IL"]
        parts.append(f"N={n}: RF1-IL {m['RF1-IL']:.3f}, RF3-IL {m['RF3-IL']:.3f}, RF3-CL {m['RF3-CL']:.3f}"
                     + ("" if in_range else " (index out of range)"))
    return CheckResult("C6 fairness RF1-IL >= RF3-IL and RF3-CL >= RF3-IL", ok, "; ".join(parts))


def check_convergence_speed(points, n_femto: int = 4) -> CheckResult:
    def med(label):
        its = [np.inf if v is None else v for v in _values(points, label, n_femto, "convergence_iteration")]
        return float(np.median(its)), sum(np.isfinite(its)), len(its)

    il, il_c, il_n = med("RF1-IL")
    cl, cl_c, cl_n = med("RF1-CL")
    return CheckResult(
        "C7 cooperation converges sooner (RF1)",
        cl < il,
        f"median first-converged iteration RF1-CL {cl} ({cl_c}/{cl_n} converged) vs "
        f"RF1-IL {il} ({il_c}/{il_n} converged); non-converged runs count as infinite",
    )


def run_sweep_checks(result) -> list[CheckResult]:
    """Every criterion whose series and network sizes are present in ``result``."""
    pts = result.points
    out = []
    if _has(pts, ACCEPTANCE_SERIES["C2"], [4]):
        out.append(check_macro_convergence(pts))
    if _has(pts, ACCEPTANCE_SERIES["C3"], [4]):
        out.append(check_reward_ordering(pts))
    if _has(pts, ACCEPTANCE_SERIES["C4"], [4, 7, 11]):
        out.append(check_rf3_capacity_gain(pts))
    if _has(pts, ACCEPTANCE_SERIES["C5"], [11]):
        out.append(check_cooperation_gain(pts))
    if _has(pts, ACCEPTANCE_SERIES["C6"], [4, 7, 11]):
        out.append(check_fairness_ordering(pts))
    if _has(pts, ACCEPTANCE_SERIES["C7"], [4]):
        out.append(check_convergence_speed(pts))
    return out
