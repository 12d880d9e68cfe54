"""Experiment sweeps that regenerate the convergence, capacity and fairness
figures as plot-ready CSV files plus a JSON manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .agents import RewardKind, RewardSpec
from .harness import Paradigm, SimConfig, run_episode
from .metrics import overhead_entries, summarize

log = logging.getLogger(__name__)

__all__ = [
    "FIGURE_SCHEMA_VERSION",
    "Series",
    "SweepSpec",
    "FigureDataset",
    "SweepResult",
    "parse_series",
    "figure_preset",
    "run_point",
    "run_sweep",
]

FIGURE_SCHEMA_VERSION = 1
_SERIES_RE = re.compile(r"^(RF[123])(?:\(K=([0-9.eE+]+)\))?-(IL|CL)$")


@dataclass(frozen=True)
class Series:
    reward: RewardSpec
    paradigm: Paradigm

    @property
    def label(self) -> str:
        return f"{self.reward.label}-{Paradigm(self.paradigm).value}"


def parse_series(label: str) -> Series:
    """Parse labels such as ``RF1-IL``, ``RF2(K=1000)-IL`` or ``RF3-CL``."""
    m = _SERIES_RE.match(label.strip())
    if not m:
        raise ValueError(f"cannot parse series label {label!r}")
    kind, k, paradigm = m.groups()
    reward = RewardSpec(RewardKind(kind), K=float(k)) if k else RewardSpec(RewardKind(kind))
    return Series(reward, Paradigm(paradigm))


@dataclass
class SweepSpec:
    n_femto: list[int]
    series: list[str]
    seeds: int | list[int] = 10
    base: dict = field(default_factory=dict)
    output_dir: str | None = None
    trace_stride: int = 10
    trace_subcarrier: int = 0
    workers: int = 1
    figures: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.n_femto or not self.series:
            raise ValueError("sweep axes must be non-empty")
        if isinstance(self.seeds, int):
            if self.seeds < 1:
                raise ValueError("need at least one seed per point")
        elif not self.seeds:
            raise ValueError("need at least one seed per point")
        for s in self.series:
            parse_series(s)
        bad = set(self.base) & {"n_femto", "rng_seed", "paradigm", "reward"}
        if bad:
            raise ValueError(f"base overrides may not set sweep axes: {sorted(bad)}")

    @classmethod
    def from_axes(cls, n_femto: Sequence[int], paradigms: Iterable[str], rewards: Iterable[RewardSpec],
                  **kw) -> "SweepSpec":
        series = [f"{r.label}-{Paradigm(p).value}" for r in rewards for p in paradigms]
        return cls(list(n_femto), series, **kw)

    @property
    def seed_list(self) -> list[int]:
        return list(range(self.seeds)) if isinstance(self.seeds, int) else list(self.seeds)

    def configs(self) -> list[SimConfig]:
        out = []
        for label in self.series:
            s = parse_series(label)
            for n in self.n_femto:
                for seed in self.seed_list:
                    out.append(SimConfig(n_femto=n, paradigm=s.paradigm, reward=s.reward, rng_seed=seed,
                                         **self.base))
        return out

    def to_dict(self) -> dict:
        return {
            "n_femto": list(self.n_femto),
            "series": list(self.series),
            "seeds": self.seeds if isinstance(self.seeds, int) else list(self.seeds),
            "base": dict(self.base),
            "trace_stride": self.trace_stride,
            "trace_subcarrier": self.trace_subcarrier,
            "figures": list(self.figures),
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


# Preset ids double as the figure numbers in output file names.
_PRESETS = {
    2: dict(n_femto=[4], series=["RF1-IL", "RF2(K=80)-IL", "RF2(K=1000)-IL", "RF2(K=10000)-IL"]),
    3: dict(n_femto=list(range(4, 16)), series=["RF1-IL", "RF2(K=80)-IL", "RF3-IL"]),
    5: dict(n_femto=list(range(4, 16)), series=["RF1-IL", "RF2(K=80)-IL", "RF3-IL"]),
    7: dict(n_femto=list(range(4, 16)), series=["RF1-IL", "RF3-IL", "RF3-CL"]),
    9: dict(n_femto=list(range(4, 16)), series=["RF1-IL", "RF3-IL", "RF3-CL"]),
    11: dict(n_femto=[4], series=["RF1-IL", "RF1-CL", "RF3-IL"]),
}
CONVERGENCE_FIGURES = (2, 11)
CAPACITY_FIGURES = (3, 7)
FAIRNESS_FIGURES = (5, 9)


def figure_preset(figure: int, **kw) -> SweepSpec:
    if figure not in _PRESETS:
        raise ValueError(f"no preset for figure {figure}; choose from {sorted(_PRESETS)}")
    p = _PRESETS[figure]
    kw.setdefault("n_femto", p["n_femto"])
    return SweepSpec(series=p["series"], figures=[figure], **kw)


@dataclass
class FigureDataset:
    figure_id: int
    title: str
    columns: tuple[str, ...]
    rows: list[tuple]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema_version={FIGURE_SCHEMA_VERSION} figure={self.figure_id} title={self.title}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list[dict]
    traces: dict  # (label, n_femto, seed) -> macro capacity on the traced subcarrier
    datasets: list[FigureDataset]
    manifest: dict

    def point_values(self, label: str, n_femto: int, key: str) -> list:
        return [p[key] for p in self.points
                if p.get("error") is None and p["label"] == label and p["n_femto"] == n_femto]


def run_point(cfg: SimConfig, trace_subcarrier: int = 0) -> tuple[dict, np.ndarray | None]:
    """One episode, summarized. Failures are reported, not raised."""
    try:
        trace = run_episode(cfg)
    except Exception as exc:  # noqa: BLE001 - a sweep records failures and moves on
        log.warning("episode %s n=%d seed=%d failed: %s", cfg.label(), cfg.n_femto, cfg.rng_seed, exc)
        return {"label": cfg.label(), "n_femto": cfg.n_femto, "rng_seed": cfg.rng_seed,
                "error": f"{type(exc).__name__}: {exc}"}, None
    summary = summarize(trace)
    summary["error"] = None
    summary["overhead_closed_form"] = (
        overhead_entries(trace.n_iterations, cfg.n_sub, cfg.n_femto, cfg.n_actions)
        if cfg.paradigm is Paradigm.CL else 0
    )
    return summary, trace.macro_capacity[:, trace_subcarrier].copy()


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _datasets(spec: SweepSpec, points: list[dict], traces: dict) -> list[FigureDataset]:
    figures = spec.figures or [3, 5, 11]
    out = []
    labels = list(spec.series)
    for fig in figures:
        if fig in CAPACITY_FIGURES or fig in FAIRNESS_FIGURES:
            key = "aggregate_capacity" if fig in CAPACITY_FIGURES else "jain"
            rows = []
            for label in labels:
                for n in spec.n_femto:
                    vals = [p[key] for p in points if p.get("error") is None and p["label"] == label
                            and p["n_femto"] == n]
                    if vals:
                        m, s = _mean_std(vals)
                        rows.append((label, n, m, s, len(vals)))
            title = "aggregate femto capacity" if key == "aggregate_capacity" else "Jain fairness index"
            out.append(FigureDataset(fig, title, ("series", "n_femto", "mean", "std", "n_seeds"), rows))
        elif fig in CONVERGENCE_FIGURES:
            n = spec.n_femto[0]
            rows = []
            for label in labels:
                runs = [traces[k] for k in sorted(traces) if k[0] == label and k[1] == n]
                if not runs:
                    continue
                arr = np.vstack(runs)
                for t in range(0, arr.shape[1], spec.trace_stride):
                    col = arr[:, t]
                    rows.append((label, t, float(col.mean()),
                                 float(col.std(ddof=1)) if len(col) > 1 else 0.0, len(col)))
            out.append(FigureDataset(fig, f"macro capacity on subcarrier {spec.trace_subcarrier}, n_femto={n}",
                                     ("series", "iteration", "mean", "std", "n_seeds"), rows))
    return out


def _points_csv(points: list[dict]) -> str:
    cols = ("label", "n_femto", "rng_seed", "aggregate_capacity", "jain", "converged",
            "convergence_iteration", "terminal_deviation", "mean_deviation_last300",
            "max_subcarrier_deviation_last300",
            "shared_entries", "overhead_closed_form", "trace_digest", "error")
    buf = io.StringIO()
    buf.write(f"# schema_version={FIGURE_SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for p in points:
        w.writerow(["" if p.get(c) is None else (repr(p[c]) if isinstance(p.get(c), float) else p[c])
                    for c in cols])
    return buf.getvalue()


def run_sweep(spec: SweepSpec, write: bool = True) -> SweepResult:
    """Run every (series, n_femto, seed) episode and aggregate mean/std.

    With ``spec.workers > 1`` episodes run in a process pool; results are
    collected in submission order so outputs do not depend on scheduling.
    """
    configs = spec.configs()
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(run_point, configs, [spec.trace_subcarrier] * len(configs)))
    else:
        results = [run_point(c, spec.trace_subcarrier) for c in configs]

    points, traces = [], {}
    for cfg, (summary, macro) in zip(configs, results):
        points.append(summary)
        if macro is not None:
            traces[(cfg.label(), cfg.n_femto, cfg.rng_seed)] = macro
    datasets = _datasets(spec, points, traces)

    digests: dict[str, list[str]] = {}
    for p in points:
        key = f"{p['label']}@n={p['n_femto']}"
        digests.setdefault(key, []).append(p.get("trace_digest") or f"error:{p['error']}")
    manifest = {
        "package_version": __version__,
        "spec": spec.to_dict(),
        "spec_digest": spec.digest(),
        "seeds": spec.seed_list,
        "config_digests": sorted({c.digest() for c in configs}),
        "trace_digests": digests,
        "failures": [p for p in points if p.get("error")],
        "files": {},
    }
    result = SweepResult(spec, points, traces, datasets, manifest)
    if write:
        write_outputs(result)
    return result


def write_outputs(result: SweepResult, output_dir: str | Path | None = None) -> Path:
    out = Path(output_dir or result.spec.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    files = {"points.csv": _points_csv(result.points)}
    for ds in result.datasets:
        files[f"figure_{ds.figure_id}.csv"] = ds.to_csv()
    for name, text in files.items():
        (out / name).write_text(text)
        result.manifest["files"][name] = hashlib.sha256(text.encode()).hexdigest()
    (out / "manifest.json").write_text(json.dumps(result.manifest, indent=2, sort_keys=True) + "\n")
    return out
