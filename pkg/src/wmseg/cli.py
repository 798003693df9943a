"""Command-line interface: generate, calibrate, segment, evaluate, bench, experiment.

Exit codes: 0 success, 1 validation error (bad arguments or inconsistent
inputs), 2 I/O error (missing or unreadable files).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .calibration import ThresholdCert, calibrate_threshold
from .harness import ExperimentPlan, run_bench, run_experiment, write_csv
from .intervals import Segments
from .metrics import EVAL_COLUMNS, evaluate
from .schemes import SchemeSpec
from .segmentation import SegmenterConfig, segment_series
from .streams import NtpModel, StreamSpec, generate_stream, read_stream_jsonl, write_stream_jsonl


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wmseg", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", type=str, default=None, help="JSON file with defaults")
        p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("generate", help="generate a synthetic stream JSONL")
    common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--scheme", type=str, default=None)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--green-frac", type=float, default=None)
    p.add_argument("--bias", type=float, default=None)
    p.add_argument("--segments", type=str, default=None, help="e.g. 100-200,325-400")
    p.add_argument("--ntp", type=str, default=None, choices=["dirichlet", "zipf"])
    p.add_argument("--delta-cap", type=float, default=None)
    p.add_argument("--concentration", type=float, default=None)
    p.add_argument("--exponent", type=float, default=None)

    p = sub.add_parser("calibrate", help="calibrate a screening threshold")
    common(p)
    p.add_argument("--scheme", type=str, default=None)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--green-frac", type=float, default=None)
    p.add_argument("--bias", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--block-len", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--mc-reps", type=int, default=None)

    p = sub.add_parser("segment", help="segment a stream with a certificate")
    common(p)
    p.add_argument("--stream", type=str, default=None)
    p.add_argument("--cert", type=str, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--discard-c", type=float, default=None)
    p.add_argument("--pad", type=int, default=None)
    p.add_argument("--trace", type=str, default=None, help="write full trace JSON here")

    p = sub.add_parser("evaluate", help="score an estimate against a stream's truth")
    common(p)
    p.add_argument("--truth", type=str, default=None, help="stream JSONL with true segments")
    p.add_argument("--est", type=str, default=None, help="result JSON from `segment`")
    p.add_argument("--model-label", type=str, default=None)

    p = sub.add_parser("bench", help="runtime scaling benchmark")
    common(p)
    p.add_argument("--n-list", type=str, default=None, help="e.g. 1000,4000,16000")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--mc-reps", type=int, default=None)

    p = sub.add_parser("experiment", help="run a replicated grid experiment")
    common(p)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--cache-dir", type=str, default=None)
    p.add_argument("--no-timing", action="store_true",
                   help="omit runtime_ms values for byte-reproducible output")

    return parser


class _Options:
    """CLI flags overlaid on --config JSON defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.config = {}
        if self.args.get("config"):
            self.config = json.loads(Path(self.args["config"]).read_text(encoding="utf-8"))

    def get(self, name: str, default=None):
        value = self.args.get(name)
        if value is None or value is False:
            value = self.config.get(name, default)
        return value

    def require(self, name: str):
        value = self.get(name)
        if value is None:
            raise ValueError(f"missing required option --{name.replace('_', '-')}")
        return value


def _parse_segments(text: str | None, n: int) -> Segments:
    if not text:
        return Segments()
    pairs = []
    for chunk in str(text).split(","):
        left, right = chunk.strip().split("-")
        pairs.append((int(left), int(right)))
    return Segments(pairs, n=n)


def _scheme_from(opts: _Options) -> SchemeSpec:
    return SchemeSpec(
        scheme_id=str(opts.get("scheme", "gumbel")),
        vocab_size=int(opts.get("vocab_size", 100)),
        green_frac=float(opts.get("green_frac", 0.5)),
        bias=float(opts.get("bias", 2.0)),
    )


def _cmd_generate(opts: _Options) -> int:
    n = int(opts.require("n"))
    scheme = _scheme_from(opts)
    ntp = NtpModel(
        kind=str(opts.get("ntp", "dirichlet")),
        delta_cap=float(opts.get("delta_cap", 0.5)),
        concentration=float(opts.get("concentration", 0.3)),
        exponent=float(opts.get("exponent", 1.5)),
    )
    spec = StreamSpec(
        n=n,
        true_segments=_parse_segments(opts.get("segments"), n),
        scheme=scheme,
        ntp_model=ntp,
        seed=int(opts.get("seed", 0)),
    )
    write_stream_jsonl(opts.require("out"), generate_stream(spec))
    return 0


def _cmd_calibrate(opts: _Options) -> int:
    cert = calibrate_threshold(
        _scheme_from(opts),
        n=int(opts.require("n")),
        block_len=int(opts.require("block_len")),
        alpha=float(opts.get("alpha", 0.05)),
        mc_reps=int(opts.get("mc_reps", 10_000)),
        seed=int(opts.get("seed", 0)),
    )
    cert.save(opts.require("out"))
    return 0


def _cmd_segment(opts: _Options) -> int:
    stream = read_stream_jsonl(opts.require("stream"))
    cert = ThresholdCert.load(opts.require("cert"))
    pad = opts.get("pad")
    config = SegmenterConfig(
        cert=cert,
        rho=float(opts.get("rho", 0.5)),
        gamma=float(opts.get("gamma", 0.1)),
        discard_c=float(opts.get("discard_c", 0.5)),
        pad="auto" if pad is None else int(pad),
    )
    result = segment_series(stream.series, config)
    Path(opts.require("out")).write_text(
        json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8"
    )
    trace_path = opts.get("trace")
    if trace_path:
        trace = dict(result.trace.summary())
        trace["block_sums"] = [float(x) for x in result.trace.block_sums]
        trace["windows"] = [[list(w[0]), list(w[1])] for w in result.trace.windows]
        Path(trace_path).write_text(json.dumps(trace, indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_evaluate(opts: _Options) -> int:
    stream = read_stream_jsonl(opts.require("truth"))
    est_data = json.loads(Path(opts.require("est")).read_text(encoding="utf-8"))
    estimate = Segments(
        [(seg["left"], seg["right"]) for seg in est_data["segments"]], n=stream.series.n
    )
    report = evaluate(stream.true_segments, estimate, stream.series.n)
    row = report.csv_row(
        str(opts.get("model_label", "synthetic")), stream.scheme.scheme_id, "wmseg"
    )
    out = opts.get("out")
    if out:
        write_csv(out, EVAL_COLUMNS, [row])
    else:
        print(",".join(EVAL_COLUMNS))
        print(",".join(row))
    return 0


def _cmd_bench(opts: _Options) -> int:
    n_list = [int(x) for x in str(opts.require("n_list")).split(",")]
    run_bench(
        n_list,
        reps=int(opts.get("reps", 5)),
        seed=int(opts.get("seed", 0)),
        out_path=opts.require("out"),
        alpha=float(opts.get("alpha", 0.05)),
        mc_reps=int(opts.get("mc_reps", 10_000)),
    )
    return 0


def _cmd_experiment(opts: _Options) -> int:
    plan_data = dict(opts.config)
    if not plan_data:
        raise ValueError("experiment requires --config with a plan JSON")
    if opts.args.get("seed") is not None:
        plan_data["seed"] = opts.args["seed"]
    if opts.args.get("no_timing"):
        plan_data["include_timing"] = False
    plan = ExperimentPlan.from_json(plan_data)
    run_experiment(
        plan,
        out_path=opts.require("out"),
        cache_dir=opts.get("cache_dir"),
        jobs=int(opts.get("jobs", 1)),
    )
    return 0


_HANDLERS = {
    "generate": _cmd_generate,
    "calibrate": _cmd_calibrate,
    "segment": _cmd_segment,
    "evaluate": _cmd_evaluate,
    "bench": _cmd_bench,
    "experiment": _cmd_experiment,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args, unknown = parser.parse_known_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; -h/--help exits 0, bad args are
        # validation errors.
        return 0 if exc.code in (0, None) else 1
    if unknown or args.command not in _HANDLERS:
        parser.print_usage(sys.stderr)
        return 1
    try:
        opts = _Options(args)
        return _HANDLERS[args.command](opts)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: cannot access {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
