"""Command-line front end: ``edgesched <subcommand> [options]``.

Values come from, in increasing precedence: built-in defaults, the JSON file
given with ``--config`` (one object per subcommand plus a shared
``workload`` object of generator parameters), and command-line flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import signal
import sys
import threading
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import BACKEND, __version__
from .agent import Agent, AgentConfig
from .bench import DEFAULT_CONFIGS, BenchSpec, ConfigError, bench, config_for, export_figures
from .gateway import Gateway, GatewayConfig, parse_listen
from .operator import DEFAULT_THRESHOLD, noisy_grid, save_png
from .policy import PROCESS_POLICY_NAMES, UPLOAD_POLICY_NAMES
from .simlink import BYTES_PER_MBIT
from .simulator import LatencySummary, SimConfig, repeat_seeds, run
from .trace import read_trace, write_trace
from .workload import ProfileSpec, Workload, generate, load_manifest

log = logging.getLogger("edgesched")

SUBCOMMANDS = ("simulate", "bench", "gen-workload", "agent", "gateway", "export")


def _mbps(x: float) -> float:
    return x * 1e6  # bits per second


def _profile(args) -> ProfileSpec:
    fields = {f.name for f in dataclasses.fields(ProfileSpec)}
    params = dict(args.workload_params)
    unknown = set(params) - fields
    if unknown:
        raise ConfigError(f"unknown workload parameters: {sorted(unknown)}")
    if getattr(args, "n_docs", None) is not None:
        params["n_docs"] = args.n_docs
    for k in ("bump_width", "bump_peak"):
        if k in params:
            params[k] = tuple(params[k])
    params.setdefault("seed", args.seed)
    spec = ProfileSpec(**params)
    spec.validate()
    return spec


def _workload(args, seed: Optional[int] = None) -> Workload:
    if args.workload:
        return load_manifest(args.workload)
    spec = _profile(args)
    return generate(spec if seed is None else dataclasses.replace(spec, seed=seed))


def _sim_config(args) -> SimConfig:
    if args.key:
        return config_for(
            args.key,
            link_capacity=_mbps(args.capacity_mbps),
            max_concurrent_uploads=args.uploads,
            sampling_period=args.sampling_period,
            upload_overhead=args.upload_overhead,
        )
    return SimConfig(
        num_cpu_slots=args.cpu_slots,
        max_concurrent_uploads=args.uploads,
        link_capacity=_mbps(args.capacity_mbps),
        process_policy=args.process_policy,
        upload_policy=args.upload_policy,
        offline_preprocessed=args.offline_preprocessed,
        sampling_period=args.sampling_period,
        upload_overhead=args.upload_overhead,
    )


# -- subcommands ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _sim_config(args).with_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [args.seed] if args.repeats == 1 else repeat_seeds(args.seed, args.repeats)
    rows, latencies = [], []
    for rep, s in enumerate(seeds):
        wl = _workload(args, s)
        res = run(cfg.with_seed(s), wl)
        rows.append({"repeat": rep, "seed": s, **res.metrics.as_row()})
        latencies.append(res.metrics.end_to_end_latency)
        suffix = "" if args.repeats == 1 else f"_r{rep}"
        (out / f"trace{suffix}.csv").write_text(write_trace(res.trace))
        (out / f"spline_knots{suffix}.csv").write_text(res.spline.dump_knots())
        (out / f"spline_estimates{suffix}.csv").write_text(res.spline.dump_estimates(len(wl)))
    cols = list(rows[0])
    lines = [",".join(cols)] + [",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) for r in rows]
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")
    s = LatencySummary.of(latencies)
    print(f"end-to-end latency: median {s.median:.3f}s  (min {s.min:.3f}, max {s.max:.3f}, n={len(latencies)})")
    print(f"wrote {out}/metrics.csv and traces")
    return 0


def cmd_bench(args) -> int:
    spec = BenchSpec(
        configs=tuple(args.configs),
        repeats=args.repeats,
        seed=args.seed,
        workload=Path(args.workload) if args.workload else _profile(args),
        link_capacity=_mbps(args.capacity_mbps),
        max_concurrent_uploads=args.uploads,
        random_upload=not args.fixed_upload,
        sampling_period=args.sampling_period,
        upload_overhead=args.upload_overhead,
        keep_traces=not args.no_traces,
    )
    t0 = time.perf_counter()
    result = bench(spec, workers=args.workers)
    out = result.write(args.out)
    print(result.table())
    print(f"{len(result.runs)} runs in {time.perf_counter() - t0:.1f}s; wrote {out}/summary.csv, {out}/runs.csv")
    return 0


def cmd_gen_workload(args) -> int:
    spec = _profile(args)
    wl = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "workload.csv").write_text(wl.to_csv())
    print(f"wrote {len(wl)} documents to {out}/workload.csv")
    if args.images:
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        # the fill flattens about 95% of the dark share, so scale to match
        dark = np.clip(wl.reduction / 0.95, 0.0, 0.95)
        for it, d in zip(wl, dark):
            save_png(img_dir / f"img_{it.index:05d}.png", noisy_grid((args.image_size, args.image_size), float(d), spec.seed * 100003 + it.index))
        print(f"wrote {len(wl)} frames to {img_dir}")
    return 0


def cmd_agent(args) -> int:
    cfg = AgentConfig(
        watch_dir=Path(args.watch),
        gateway_url=args.gateway,
        stream_id=args.stream_id,
        num_process_workers=args.process_workers,
        num_upload_workers=args.upload_workers,
        process_policy=args.process_policy,
        upload_policy=args.upload_policy,
        poll_interval=args.poll_interval,
        index_rule=args.index_rule,
        threshold=args.threshold,
        seed=args.seed,
        work_dir=Path(args.work_dir) if args.work_dir else None,
        upload_limit=args.upload_limit_mbps * BYTES_PER_MBIT if args.upload_limit_mbps else None,
        max_process_bytes=args.max_process_bytes,
    )
    agent = Agent(cfg).start()
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        while not stop.is_set() and agent.error is None:
            if args.exit_when_idle is not None and agent.wait_until(idle=args.exit_when_idle, timeout=0.2):
                break
            stop.wait(0.2)
    finally:
        agent.stop(timeout=10)
        trace_out = Path(args.trace_out) if args.trace_out else Path(args.out) / "agent_trace.csv"
        trace_out.parent.mkdir(parents=True, exist_ok=True)
        agent.write_trace(trace_out)
        print(f"uploaded {agent.uploaded_count} documents; trace in {trace_out}")
    if agent.error is not None:
        print(f"agent stopped with error: {agent.error}", file=sys.stderr)
        return 1
    return 0


def cmd_gateway(args) -> int:
    host, port = parse_listen(args.listen)
    gw = Gateway(GatewayConfig(host, port, Path(args.storage), args.max_body))
    print(f"gateway listening on {gw.url}, storing under {args.storage}", flush=True)
    try:
        gw.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_export(args) -> int:
    wl = _workload(args)
    spline = None
    if args.trace:
        trace = read_trace(Path(args.trace).read_text())
    else:
        res = run(_sim_config(args).with_seed(args.seed), wl)
        trace, spline = res.trace, res.spline
    files = export_figures(wl, trace, args.out, spline=spline, gnuplot=args.gnuplot)
    for name, path in files.items():
        print(f"{name}: {path}")
    return 0


# -- parser ---------------------------------------------------------------------------


def _sim_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workload", help="manifest CSV; default is a generated workload")
    p.add_argument("--n-docs", type=int, help="documents in the generated workload")
    p.add_argument("--key", help="configuration key such as '1,s', '2,r', '0,r' or 'ffill,0'")
    p.add_argument("--cpu-slots", type=int, default=1, help="edge CPU slots M")
    p.add_argument("--uploads", type=int, default=4, help="concurrent uploads N")
    p.add_argument("--capacity-mbps", type=float, default=16.0, help="uplink capacity in Mbit/s")
    p.add_argument("--process-policy", choices=PROCESS_POLICY_NAMES, default="splines")
    p.add_argument("--upload-policy", choices=UPLOAD_POLICY_NAMES, default="inverse")
    p.add_argument("--offline-preprocessed", action="store_true")
    p.add_argument("--sampling-period", type=int, default=5, help="every K-th processing pick explores")
    p.add_argument("--upload-overhead", type=float, default=0.0, help="fixed seconds per upload before bytes flow")


def build_parser() -> argparse.ArgumentParser:
    def globals_parser(suppress: bool) -> argparse.ArgumentParser:
        # subcommands accept the same flags but must not clobber earlier values
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=d(0), help="base seed")
        g.add_argument("--out", default=d("out"), metavar="DIR", help="output directory")
        g.add_argument("--config", default=d(None), metavar="FILE", help="JSON config file")
        g.add_argument("-v", "--verbose", action="count", default=d(0))
        return g

    common = globals_parser(True)
    parser = argparse.ArgumentParser(prog="edgesched", description=__doc__.splitlines()[0], parents=[globals_parser(False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", parents=[common], help="run the discrete-event simulator")
    _sim_options(p)
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="run the configuration matrix")
    p.add_argument("--configs", nargs="+", default=list(DEFAULT_CONFIGS), metavar="KEY")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--workload", help="manifest CSV; default is a generated workload per repeat")
    p.add_argument("--n-docs", type=int)
    p.add_argument("--capacity-mbps", type=float, default=16.0)
    p.add_argument("--uploads", type=int, default=4)
    p.add_argument("--sampling-period", type=int, default=5)
    p.add_argument("--upload-overhead", type=float, default=0.0)
    p.add_argument("--fixed-upload", action="store_true", help="keep the inverse upload order for 'M,r' configs")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--no-traces", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-workload", parents=[common], help="write a synthetic workload manifest")
    p.add_argument("--n-docs", type=int)
    p.add_argument("--images", action="store_true", help="also render matching grayscale PNG frames")
    p.add_argument("--image-size", type=int, default=256)
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("agent", parents=[common], help="watch a directory and upload to a gateway")
    p.add_argument("--watch", required=True, metavar="DIR")
    p.add_argument("--gateway", required=True, metavar="URL")
    p.add_argument("--stream-id", default="stream")
    p.add_argument("--process-workers", type=int, default=1)
    p.add_argument("--upload-workers", type=int, default=4)
    p.add_argument("--process-policy", choices=PROCESS_POLICY_NAMES, default="splines")
    p.add_argument("--upload-policy", choices=UPLOAD_POLICY_NAMES, default="inverse")
    p.add_argument("--poll-interval", type=float, default=0.25)
    p.add_argument("--index-rule", choices=("filename", "arrival"), default="filename")
    p.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD)
    p.add_argument("--work-dir", help="where processed outputs are written; default is a temp dir")
    p.add_argument("--upload-limit-mbps", type=float, help="cap on aggregate upload rate")
    p.add_argument("--max-process-bytes", type=int, metavar="BYTES", help="upload larger files without processing")
    p.add_argument("--exit-when-idle", type=float, metavar="SECONDS", help="exit once drained and idle this long")
    p.add_argument("--trace-out", metavar="FILE")
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("gateway", parents=[common], help="receive and store uploaded documents")
    p.add_argument("--listen", default="127.0.0.1:8080", metavar="ADDR:PORT")
    p.add_argument("--storage", default="gateway-storage", metavar="DIR")
    p.add_argument("--max-body", type=int, default=256 * 1024 * 1024, metavar="BYTES")
    p.set_defaults(func=cmd_gateway)

    p = sub.add_parser("export", parents=[common], help="write plot-ready CSVs for the figures")
    _sim_options(p)
    p.add_argument("--trace", help="existing trace CSV; default simulates the chosen config")
    p.add_argument("--gnuplot", action="store_true", help="also emit a gnuplot script")
    p.set_defaults(func=cmd_export)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> dict:
    """Fold the ``--config`` file into subparser defaults; returns workload params."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    data = json.loads(Path(known.config).read_text())
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, section in data.items():
        if name in ("workload", "global"):
            continue
        if name not in subparsers.choices:
            raise ConfigError(f"unknown config section {name!r}")
        subparsers.choices[name].set_defaults(**{k.replace("-", "_"): v for k, v in section.items()})
    parser.set_defaults(**{k.replace("-", "_"): v for k, v in data.get("global", {}).items()})
    return data.get("workload", {})


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        workload_params = _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        parser.error(f"--config: {exc}")
    args = parser.parse_args(argv)
    args.workload_params = workload_params
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"edgesched {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
