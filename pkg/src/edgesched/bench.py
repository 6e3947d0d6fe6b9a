"""Benchmark matrix over the named configurations, and figure exports.

Config keys follow the usual shorthand: ``M,s`` is the spline policy on
``M`` cores, ``M,r`` the random baseline, ``0,r`` uploads originals only and
``ffill,0`` streams documents that were pre-processed offline.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .estimator import RatioSpline
from .simulator import LatencySummary, RunResult, SimConfig, repeat_seeds, run
from .trace import PROC_END, TraceEvent, selection_label, write_trace
from .workload import ProfileSpec, Workload, generate, load_manifest

DEFAULT_CONFIGS = ("0,r", "1,s", "2,s", "3,s", "1,r", "2,r", "3,r", "ffill,0")
SUMMARY_COLUMNS = ("config", "min", "q1", "median", "q3", "max")
_KEY = re.compile(r"^(\d+),([sr])$")


class ConfigError(ValueError):
    pass


def config_for(
    key: str,
    *,
    link_capacity: float = 16e6,
    max_concurrent_uploads: int = 4,
    random_upload: bool = True,
    sampling_period: int = 5,
    upload_overhead: float = 0.0,
) -> SimConfig:
    """Translate a configuration key into a simulator config.

    ``random_upload`` decides whether ``M,r`` also draws the upload order at
    random or keeps the inverse upload policy.
    """
    common = dict(
        max_concurrent_uploads=max_concurrent_uploads,
        link_capacity=link_capacity,
        sampling_period=sampling_period,
        upload_overhead=upload_overhead,
    )
    if key == "ffill,0":
        return SimConfig(0, process_policy="none", upload_policy="random", offline_preprocessed=True, **common)
    m = _KEY.match(key)
    if not m:
        raise ConfigError(f"unknown config key {key!r}; expected 'M,s', 'M,r', '0,r' or 'ffill,0'")
    cores, kind = int(m[1]), m[2]
    if cores == 0:
        if kind != "r":
            raise ConfigError("'0,s' makes no sense: the spline policy needs a core")
        return SimConfig(0, process_policy="none", upload_policy="random", **common)
    if kind == "s":
        return SimConfig(cores, process_policy="splines", upload_policy="inverse", **common)
    return SimConfig(cores, process_policy="random", upload_policy="random" if random_upload else "inverse", **common)


@dataclass
class BenchSpec:
    configs: Sequence[str] = DEFAULT_CONFIGS
    repeats: int = 5
    seed: int = 0
    workload: Union[ProfileSpec, Path, str] = field(default_factory=ProfileSpec)
    link_capacity: float = 16e6
    max_concurrent_uploads: int = 4
    random_upload: bool = True
    sampling_period: int = 5
    upload_overhead: float = 0.0
    keep_traces: bool = True

    def validate(self) -> dict[str, SimConfig]:
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if len(set(self.configs)) != len(self.configs):
            raise ConfigError("config keys must be unique")
        if not self.configs:
            raise ConfigError("no configs given")
        return {
            k: config_for(
                k,
                link_capacity=self.link_capacity,
                max_concurrent_uploads=self.max_concurrent_uploads,
                random_upload=self.random_upload,
                sampling_period=self.sampling_period,
                upload_overhead=self.upload_overhead,
            )
            for k in self.configs
        }

    def workload_for(self, seed: int) -> Workload:
        # a manifest is one fixed realization; a profile is re-drawn per repeat
        if isinstance(self.workload, ProfileSpec):
            return generate(dataclasses.replace(self.workload, seed=seed))
        return load_manifest(self.workload)


@dataclass
class RunRecord:
    config: str
    repeat: int
    seed: int
    result: RunResult

    def row(self) -> dict:
        return {"config": self.config, "repeat": self.repeat, "seed": self.seed, **self.result.metrics.as_row()}


@dataclass
class BenchResult:
    spec: BenchSpec
    summaries: dict[str, LatencySummary]
    runs: list[RunRecord]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for key, s in self.summaries.items():
            w.writerow([key, *(repr(v) for v in (s.min, s.q1, s.median, s.q3, s.max))])
        return buf.getvalue()

    def runs_csv(self) -> str:
        buf = io.StringIO()
        rows = [r.row() for r in self.runs]
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()

    def table(self) -> str:
        head = f"{'config':>8} {'min':>9} {'q1':>9} {'median':>9} {'q3':>9} {'max':>9}"
        lines = [head, "-" * len(head)]
        for key, s in self.summaries.items():
            lines.append(f"{key:>8} " + " ".join(f"{v:9.2f}" for v in (s.min, s.q1, s.median, s.q3, s.max)))
        return "\n".join(lines)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(self.summary_csv())
        (out / "runs.csv").write_text(self.runs_csv())
        if self.spec.keep_traces:
            traces = out / "traces"
            traces.mkdir(exist_ok=True)
            for r in self.runs:
                (traces / f"{slug(r.config)}_r{r.repeat}.csv").write_text(write_trace(r.result.trace))
        return out


def slug(key: str) -> str:
    return key.replace(",", "")


def _one(args):
    key, cfg, repeat, seed, spec = args
    res = run(cfg.with_seed(seed), spec.workload_for(seed))
    if not spec.keep_traces:
        res = dataclasses.replace(res, trace=[], documents={})
    return RunRecord(key, repeat, seed, res)


def bench(spec: BenchSpec, workers: int = 1) -> BenchResult:
    """Run every config on the same per-repeat workloads (paired seeds)."""
    configs = spec.validate()  # all parse errors surface before any run
    seeds = repeat_seeds(spec.seed, spec.repeats)
    jobs = [(k, cfg, r, s, spec) for k, cfg in configs.items() for r, s in enumerate(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_one, jobs))
    else:
        runs = [_one(j) for j in jobs]
    summaries = {
        k: LatencySummary.of([r.result.metrics.end_to_end_latency for r in runs if r.config == k]) for k in configs
    }
    return BenchResult(spec, summaries, runs)


# -- figure exports -------------------------------------------------------------

FIG5_COLUMNS = ("index", "true_ratio", "spline_estimate", "processed")
FIG6_COLUMNS = ("time", "doc_index", "event", "detail", "label")


def rebuild_spline(trace: Sequence[TraceEvent], workload: Workload) -> RatioSpline:
    """Knots implied by a trace: every document that finished processing."""
    spline = RatioSpline()
    for ev in trace:
        if ev.event == PROC_END:
            spline.observe(ev.doc_index, workload[ev.doc_index].true_ratio)
    return spline


def fig5_csv(workload: Workload, spline: RatioSpline) -> str:
    knots = {x for x, _ in spline.knots}
    idx = [it.index for it in workload]
    est = spline.estimate_many(idx)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIG5_COLUMNS)
    for it, e in zip(workload, est):
        w.writerow([it.index, repr(it.true_ratio), repr(float(e)), int(it.index in knots)])
    return buf.getvalue()


def fig6_csv(trace: Sequence[TraceEvent]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIG6_COLUMNS)
    for ev in trace:
        w.writerow([repr(float(ev.time)), ev.doc_index, ev.event, ev.detail, selection_label(ev)])
    return buf.getvalue()


GNUPLOT = """\
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 1000,450
set output 'fig5.png'
set xlabel 'document index'
set ylabel 'bytes saved per cpu-second'
plot 'fig5.csv' using 1:2 with points pt 7 ps 0.4 title 'true ratio', \\
     '' using 1:3 with lines title 'spline estimate', \\
     '' using ($4 > 0 ? $1 : 1/0):2 with points pt 6 title 'processed at edge'
set output 'fig6.png'
set xlabel 'time (s)'
set ylabel 'document index'
plot 'fig6.csv' using (strcol(5) eq 'process (prio)' ? $1 : 1/0):2 with points pt 7 ps 0.4 title 'process (prio)', \\
     '' using (strcol(5) eq 'process (search)' ? $1 : 1/0):2 with points pt 9 title 'process (search)', \\
     '' using (strcol(5) eq 'upload' ? $1 : 1/0):2 with points pt 1 ps 0.4 title 'upload'
"""


def export_figures(
    workload: Workload,
    trace: Sequence[TraceEvent],
    out_dir,
    spline: Optional[RatioSpline] = None,
    gnuplot: bool = False,
) -> dict[str, Path]:
    """Write plot-ready CSVs for the ratio-vs-index and event-trace figures,
    plus the raw spline dumps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spline = spline if spline is not None else rebuild_spline(trace, workload)
    files = {
        "fig5": out / "fig5.csv",
        "fig6": out / "fig6.csv",
        "knots": out / "spline_knots.csv",
        "estimates": out / "spline_estimates.csv",
    }
    files["fig5"].write_text(fig5_csv(workload, spline))
    files["fig6"].write_text(fig6_csv(trace))
    files["knots"].write_text(spline.dump_knots())
    files["estimates"].write_text(spline.dump_estimates(len(workload)))
    if gnuplot:
        files["gnuplot"] = out / "figures.gp"
        files["gnuplot"].write_text(GNUPLOT)
    return files
