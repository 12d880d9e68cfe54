"""Run metrics and the per-episode trace CSV format."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .harness import RunTrace, SimConfig

__all__ = [
    "TRACE_SCHEMA_VERSION",
    "TRACE_COLUMNS",
    "ConvergenceResult",
    "jain_index",
    "default_window",
    "aggregate_femto_capacity",
    "per_femto_capacity",
    "fairness",
    "convergence_metrics",
    "terminal_deviation",
    "overhead_entries",
    "summarize",
    "write_trace_csv",
    "read_trace_csv",
]

TRACE_SCHEMA_VERSION = 1
TRACE_COLUMNS = (
    "iteration", "subcarrier", "agent", "state", "action", "power_dbm",
    "reward", "C_o", "C_i", "shared_entries",
)


def jain_index(values) -> float:
    """Jain's fairness index ``(sum x)^2 / (n * sum x^2)``.

    An all-zero vector is reported as 1.0 (every user equally starved).
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("jain_index needs at least one value")
    if np.any(x < 0):
        raise ValueError("jain_index is defined for non-negative values")
    sq = float(np.sum(x * x))
    if sq == 0.0:
        return 1.0
    return float(np.sum(x) ** 2 / (x.size * sq))


def default_window(n_iterations: int, fraction: float = 0.1) -> slice:
    start = n_iterations - max(1, int(round(fraction * n_iterations)))
    return slice(max(start, 0), n_iterations)


def _window(trace: RunTrace, window) -> slice:
    if window is None:
        return default_window(trace.n_iterations)
    if isinstance(window, slice):
        w = slice(*window.indices(trace.n_iterations))
    else:
        start, stop = window
        w = slice(start, stop)
    if w.start < 0 or w.stop > trace.n_iterations or w.stop <= w.start:
        raise ValueError(f"empty or out-of-range window {window!r} for a trace of {trace.n_iterations}")
    return w


def aggregate_femto_capacity(trace: RunTrace, window=None) -> float:
    """Mean over ``window`` of the capacity summed over femtocells and subcarriers.

    ``window`` is a ``slice`` or ``(start, stop)``; the default is the final
    10% of iterations.
    """
    w = _window(trace, window)
    return float(trace.femto_capacity[w].sum(axis=(1, 2)).mean())


def per_femto_capacity(trace: RunTrace, window=None) -> np.ndarray:
    w = _window(trace, window)
    return trace.femto_total_capacity()[w].mean(axis=0)


def fairness(trace: RunTrace, window=None) -> float:
    return jain_index(per_femto_capacity(trace, window))


@dataclass(frozen=True)
class ConvergenceResult:
    converged: bool
    iteration: int | None
    terminal_deviation: float


def convergence_metrics(trace_or_macro, target: float, band: float = 0.5, hold: int = 100,
                        terminal_fraction: float = 0.1) -> ConvergenceResult:
    """First iteration that starts ``hold`` consecutive in-band iterations.

    In-band means ``|C_o - target| <= band`` on every subcarrier. Accepts a
    :class:`RunTrace` or a raw ``(T, n_sub)`` macro-capacity array.
    """
    if band <= 0 or hold < 1:
        raise ValueError("band must be positive and hold at least 1")
    macro = trace_or_macro.macro_capacity if isinstance(trace_or_macro, RunTrace) else trace_or_macro
    macro = np.asarray(macro, dtype=float)
    if macro.ndim == 1:
        macro = macro[:, None]
    T = macro.shape[0]
    dev = np.abs(macro - target)
    inside = np.all(dev <= band, axis=1)
    first = None
    run = 0
    for t in range(T):
        run = run + 1 if inside[t] else 0
        if run >= hold:
            first = t - hold + 1
            break
    tail = dev[default_window(T, terminal_fraction)]
    return ConvergenceResult(first is not None, first, float(tail.mean()))


def terminal_deviation(trace: RunTrace, last: int = 300) -> np.ndarray:
    """Per-subcarrier mean ``|C_o - target|`` over the final ``last`` iterations."""
    tail = trace.macro_capacity[-last:]
    return np.abs(tail - trace.config.target_capacity).mean(axis=0)


def overhead_entries(iterations: int, n_sub: int, n_femto: int, n_actions: int) -> int:
    """Closed-form count of Q-values exchanged by cooperative agents."""
    return iterations * n_sub * n_femto * (n_femto - 1) * n_actions


def summarize(trace: RunTrace, band: float = 0.5, hold: int = 100) -> dict:
    cfg = trace.config
    conv = convergence_metrics(trace, cfg.target_capacity, band, hold)
    return {
        "label": cfg.label(),
        "n_femto": cfg.n_femto,
        "rng_seed": cfg.rng_seed,
        "aggregate_capacity": aggregate_femto_capacity(trace) if cfg.n_femto else 0.0,
        "jain": fairness(trace) if cfg.n_femto else 1.0,
        "converged": conv.converged,
        "convergence_iteration": conv.iteration,
        "terminal_deviation": conv.terminal_deviation,
        "mean_deviation_last300": float(terminal_deviation(trace).mean()),
        "max_subcarrier_deviation_last300": float(terminal_deviation(trace).max()),
        "shared_entries": int(trace.shared_entries[-1]) if trace.n_iterations else 0,
        "trace_digest": trace.digest(),
    }


# -- trace CSV -------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace_csv(trace: RunTrace, path_or_buf) -> None:
    """Long-format trace: one row per (iteration, subcarrier, agent).

    The first line is ``# schema_version=<n>``, followed by the header row.
    """
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        fh.write(f"# schema_version={TRACE_SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        power = trace.action_dbm()
        T, N, n_sub = trace.actions.shape
        for t in range(T):
            shared = int(trace.shared_entries[t])
            for n in range(n_sub):
                c_o = _fmt(trace.macro_capacity[t, n])
                for i in range(N):
                    w.writerow((t, n, i, int(trace.states[t, i, n]), int(trace.actions[t, i, n]),
                                _fmt(power[t, i, n]), _fmt(trace.rewards[t, i, n]), c_o,
                                _fmt(trace.femto_capacity[t, i, n]), shared))
    finally:
        if own:
            fh.close()


def read_trace_csv(path_or_text, config: SimConfig | None = None) -> RunTrace:
    """Rebuild a :class:`RunTrace` from :func:`write_trace_csv` output.

    Without ``config`` the trace carries a default config resized to the
    agent/subcarrier/iteration counts found in the file.
    """
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    else:
        text = path_or_text
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# schema_version="):
        raise ValueError("missing schema_version line")
    version = int(lines[0].split("=", 1)[1])
    if version != TRACE_SCHEMA_VERSION:
        raise ValueError(f"unsupported trace schema {version}")
    reader = csv.DictReader(io.StringIO("\n".join(lines[1:])))
    if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
        raise ValueError(f"unexpected columns {reader.fieldnames}")
    rows = list(reader)
    T = 1 + max(int(r["iteration"]) for r in rows)
    n_sub = 1 + max(int(r["subcarrier"]) for r in rows)
    N = 1 + max(int(r["agent"]) for r in rows)
    macro = np.zeros((T, n_sub))
    femto = np.zeros((T, N, n_sub))
    states = np.zeros((T, N, n_sub), dtype=np.int8)
    actions = np.zeros((T, N, n_sub), dtype=np.int8)
    rewards = np.zeros((T, N, n_sub))
    shared = np.zeros(T, dtype=np.int64)
    for r in rows:
        t, n, i = int(r["iteration"]), int(r["subcarrier"]), int(r["agent"])
        macro[t, n] = float(r["C_o"])
        femto[t, i, n] = float(r["C_i"])
        states[t, i, n] = int(r["state"])
        actions[t, i, n] = int(r["action"])
        rewards[t, i, n] = float(r["reward"])
        shared[t] = int(r["shared_entries"])
    if config is None:
        config = SimConfig(n_femto=N, n_sub=n_sub, q_iterations=T)
    return RunTrace(config, macro, femto, states, actions, rewards, shared,
                    np.full((T, N), n_sub, dtype=np.int64))
