"""Command-line interface: ``simulate``, ``analyze`` and ``sample``.

Exit codes: 0 success, 2 input error, 3 too many failed simulation
replicates, 4 inference infeasible (degenerate data or posterior).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .design import DesignSpec, draw_sample
from .errors import (
    BJELError,
    DegeneratePosterior,
    DegenerateVariance,
    InvalidInput,
    NonConvergence,
    RhoUnattainable,
    SampleTooSmall,
    SingularCalibration,
    SingularSystem,
)
from .methods import PreparedSample, SurveySample
from .posterior import METHODS
from .simharness import StudyConfig, run_config
from .ustat import get_kernel

EXIT_OK, EXIT_INPUT, EXIT_QUALITY, EXIT_INFEASIBLE = 0, 2, 3, 4

logger = logging.getLogger("bjel")


class CLIError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def read_csv_columns(path, required) -> tuple[dict[str, np.ndarray], int]:
    """Read named numeric columns from a comma-separated file with a header row."""
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"input file not found: {path}")
    try:
        text = p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CLIError(f"{path}: not valid UTF-8") from exc
    rows = list(csv.reader(io.StringIO(text), delimiter=",", strict=True))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise CLIError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise CLIError(f"{path}: duplicate column names")
    missing = [c for c in required if c not in header]
    if missing:
        raise CLIError(f"{path}: missing column(s) {', '.join(missing)}")
    cols = {c: [] for c in required}
    pos = {c: header.index(c) for c in required}
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(header):
            raise CLIError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for c in required:
            cell = row[pos[c]].strip()
            try:
                val = float(cell)
            except ValueError:
                raise CLIError(f"{path}:{lineno}: column {c!r} is not numeric: {cell!r}") from None
            if not math.isfinite(val):
                raise CLIError(f"{path}:{lineno}: column {c!r} is not finite")
            cols[c].append(val)
    return {c: np.asarray(v) for c, v in cols.items()}, len(rows) - 1


def _split(arg: str | None) -> list[str]:
    return [s.strip() for s in arg.split(",") if s.strip()] if arg else []


def _floats(arg: str | None, what: str) -> list[float]:
    try:
        return [float(s) for s in _split(arg)]
    except ValueError:
        raise CLIError(f"{what} must be comma-separated numbers") from None


def build_sample(args) -> SurveySample:
    aux_cols = _split(args.aux_cols)
    totals = _floats(args.aux_totals, "--aux-totals")
    if len(aux_cols) != len(totals):
        raise CLIError("--aux-cols and --aux-totals must have the same number of entries")
    required = [args.y_col] + ([args.weight_col] if args.weight_col else []) + aux_cols
    if len(set(required)) != len(required):
        raise CLIError("y, weight and auxiliary columns must be distinct")
    cols, n = read_csv_columns(args.input, required)
    y = cols[args.y_col]
    d = cols[args.weight_col] if args.weight_col else np.ones(n)
    if np.any(d <= 0):
        raise CLIError(f"weight column {args.weight_col!r} must be strictly positive")
    aux = aux_mean = None
    N = args.population_size
    if N is not None and N <= 0:
        raise CLIError("--population-size must be positive")
    if aux_cols:
        aux = np.column_stack([cols[c] for c in aux_cols])
        aux_mean = np.asarray(totals) / (N if N else d.sum())
    return SurveySample(y, d, None, aux, aux_mean, N)


def analyze(args) -> dict:
    kernel = get_kernel(args.kernel)
    sample = build_sample(args)
    if sample.n < kernel.order + 1:
        raise CLIError(f"kernel {kernel.name!r} needs at least {kernel.order + 1} rows, got {sample.n}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        prep = PreparedSample(sample, kernel)
        ci = prep.interval(args.method, args.level)
    diagnostics = list(ci.diagnostics) + [str(w.message) for w in caught]
    return {
        "estimate": ci.estimate,
        "lower": ci.lower,
        "upper": ci.upper,
        "method": ci.method,
        "kernel": kernel.name,
        "level": ci.level,
        "n": sample.n,
        "scale_used": ci.scale_used,
        "u_statistic": prep.pseudo.u_stat,
        "diagnostics": diagnostics,
    }


def _format_analysis(res: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(res, indent=2) + "\n"
    lines = [
        f"method      {res['method']}",
        f"kernel      {res['kernel']}",
        f"n           {res['n']}",
        f"estimate    {res['estimate']:.6g}",
        f"interval    ({res['lower']:.6g}, {res['upper']:.6g})  level {res['level']:g}",
        f"scale used  {res['scale_used']:.6g}",
    ]
    lines += [f"note        {d}" for d in res["diagnostics"]]
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    res = analyze(args)
    sys.stdout.write(_format_analysis(res, args.format))
    return EXIT_OK


def cmd_simulate(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise CLIError(f"config file not found: {args.config}")
    cfg = StudyConfig.from_file(path)
    if args.replicates is not None and args.replicates < 1:
        raise CLIError("--replicates must be positive")
    result = run_config(cfg, args.seed, args.replicates)
    payload = result.to_json() + "\n"
    table = result.to_table() + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(payload, encoding="utf-8")
        out.with_suffix(".txt").write_text(table, encoding="utf-8")
        sys.stdout.write(table)
    else:
        sys.stdout.write(payload)
        sys.stderr.write(table)
    if not result.quality_ok:
        worst = max(result.metrics, key=result.failure_rate)
        sys.stderr.write(
            f"error: {result.failure_rate(worst):.1%} of replicates failed for {worst} (limit 2%)\n"
        )
        return EXIT_QUALITY
    return EXIT_OK


def cmd_sample(args) -> int:
    N, n = args.population_size, args.sample_size
    if args.sizes:
        path = Path(args.sizes)
        if not path.is_file():
            raise CLIError(f"sizes file not found: {args.sizes}")
        with path.open(encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh), None)
        if not header:
            raise CLIError(f"{args.sizes}: empty file")
        cols, _ = read_csv_columns(path, [header[0].strip()])
        z = cols[header[0].strip()]
        spec = DesignSpec(N, n, "rao_sampford", z)
    else:
        spec = DesignSpec(N, n, "srswor")
    draw = draw_sample(spec, args.seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "pi", "d"])
    for i, pi, d in zip(draw.indices, draw.incl_probs, draw.design_weights):
        writer.writerow([int(i), repr(float(pi)), repr(float(d))])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bjel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a coverage study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--replicates", type=int, help="override the replicate count B")
    p.add_argument("--out", help="write JSON here and the text table next to it (.txt)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="interval for a U-statistic from survey CSV data")
    p.add_argument("--input", required=True)
    p.add_argument("--kernel", required=True, choices=["mean", "variance", "pwm"])
    p.add_argument("--method", required=True, choices=list(METHODS))
    p.add_argument("--y-col", default="y", help="response column (default: y)")
    p.add_argument("--weight-col", help="design or calibration weight column")
    p.add_argument("--aux-cols", help="comma-separated auxiliary columns")
    p.add_argument("--aux-totals", help="known population totals of the auxiliary columns")
    p.add_argument("--population-size", type=float,
                   help="population size used to turn totals into means (default: sum of weights)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sample", help="draw a sample and write index, pi, d as CSV")
    p.add_argument("--population-size", required=True, type=int)
    p.add_argument("--sample-size", required=True, type=int)
    p.add_argument("--sizes", help="CSV whose first column holds the N size measures (Rao-Sampford)")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)
    return parser


_INFEASIBLE = (DegeneratePosterior, DegenerateVariance, SingularSystem, SingularCalibration, NonConvergence)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except _INFEASIBLE as exc:
        sys.stderr.write(f"error: inference infeasible: {type(exc).__name__}: {exc}\n")
        return EXIT_INFEASIBLE
    except (InvalidInput, SampleTooSmall, RhoUnattainable, BJELError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
