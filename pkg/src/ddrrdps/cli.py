"""Command-line front end.

Data goes to ``--out`` (or stdout); diagnostics go to stderr.  Every data
file starts with a ``#`` block echoing the effective configuration, and
nothing time-dependent is written, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import contextlib
import sys
from pathlib import Path
from typing import Sequence, TextIO

from .config import RunConfig
from .errors import ConfigError, DegenerateError
from .keyrate import PROTOCOLS
from .lp import LpProblem, dump_problem, dump_solution, parse_problem, solve_lp
from .model import decoy_gain, overall_gain, qber
from .montecarlo import GENERATOR, McConfig, McEstimate, estimate_gain, estimate_qber
from .optimizer import KeyRatePoint, cutoff_distance, evaluate, optimize_point, scan_distances
from .photonstats import build_constraints, observed_gains

CSV_COLUMNS = ("distance_km", "mu_opt", "v_th_opt", "Q", "e_b", "G_min", "rate_raw", "rate_clamped")

# command-line flag -> RunConfig field
_OVERRIDES = {
    "protocol": "protocol", "L": "L", "distance": "distance", "d_min": "d_min",
    "d_max": "d_max", "d_step": "d_step", "seed": "seed", "trials": "mc_trials",
    "slack": "slack", "n_max": "n_max", "mu": "mc_mu", "e_d": "e_d", "out": "output",
}


def fmt(x: float | None) -> str:
    """Ten significant digits in scientific notation; empty for missing values."""
    if x is None:
        return ""
    return f"{x:.9e}"


def header(config: RunConfig, extra: dict | None = None) -> str:
    lines = [f"# {line}" for line in config.to_text().splitlines()]
    for key, value in (extra or {}).items():
        lines.append(f"# {key} = {value}")
    return "\n".join(lines) + "\n"


def curve_rows(points: Sequence[KeyRatePoint]) -> str:
    out = [",".join(CSV_COLUMNS)]
    for p in points:
        out.append(",".join([
            fmt(p.distance), fmt(p.mu_opt), "" if p.v_th_opt is None else str(p.v_th_opt),
            fmt(p.q), fmt(p.e_b), fmt(p.g_min), fmt(p.rate_per_pulse), fmt(p.rate_clamped)]))
    return "\n".join(out) + "\n"


def point_report(p: KeyRatePoint) -> str:
    fields = [
        ("protocol", p.protocol_tag), ("distance_km", fmt(p.distance)), ("mu", fmt(p.mu_opt)),
        ("v_th", "" if p.v_th_opt is None else str(p.v_th_opt)), ("Q", fmt(p.q)),
        ("e_b", fmt(p.e_b)), ("G_min", fmt(p.g_min)), ("e_src", fmt(p.e_src)),
        ("rate_raw", fmt(p.rate_per_pulse)), ("rate_clamped", fmt(p.rate_clamped)),
        ("no_positive_rate", str(p.no_positive_rate).lower()), ("iterations", str(p.iterations)),
    ]
    return "".join(f"{k} = {v}\n" for k, v in fields)


@contextlib.contextmanager
def _sink(path: str):
    if not path or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w")
    except OSError as exc:
        raise ConfigError(f"cannot write output file {path!r}: {exc.strerror}") from None
    with fh:
        yield fh


# -- commands ---------------------------------------------------------------

def cmd_scan(config: RunConfig, out: TextIO, workers: int = 1) -> list[KeyRatePoint]:
    spec = config.optimization_spec()
    points = scan_distances(spec, config.d_min, config.d_max, config.d_step,
                            warm_start=config.warm_start, workers=workers)
    out.write(header(config))
    out.write(curve_rows(points))
    print(f"cutoff distance: {cutoff_distance(points):g} km", file=sys.stderr)
    return points


def cmd_optimize(config: RunConfig, out: TextIO, mu: float | None = None,
                 v_th: int | None = None) -> KeyRatePoint:
    """Optimized point, or a fixed-parameter evaluation when ``mu`` is given."""
    spec = config.optimization_spec()
    if mu is None:
        point = optimize_point(spec, config.distance)
        mode = "optimized"
    else:
        if v_th is None and config.protocol != "bb84-decoy":
            raise ConfigError("--v-th is required together with --mu for RRDPS protocols")
        point = evaluate(spec, config.distance, mu, v_th)
        mode = "fixed"
    out.write(header(config, {"mode": mode}))
    out.write(point_report(point))
    return point


def lp_problem(config: RunConfig, mu: float) -> LpProblem:
    """The worst-case G LP at ``(mu, config.distance)`` under ``config``."""
    det = config.detector()
    gains = observed_gains(mu, config.channel(), det)
    return build_constraints(gains, det, mu_context=mu, n_max=config.n_max, slack=config.slack)


def cmd_lp(path: str | None, out: TextIO, config: RunConfig | None = None,
           mu: float | None = None) -> None:
    if path is None:
        out.write(dump_problem(lp_problem(config, 1.0 if mu is None else mu)))
        return
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read problem file {path!r}: {exc.strerror}") from None
    out.write(dump_solution(solve_lp(parse_problem(text))))


def _analytic_qber(mu, channel, det, e_d) -> float:
    try:
        return qber(mu, channel, det, e_d)
    except DegenerateError:
        return 0.0


def mc_rows(config: RunConfig) -> list[tuple[str, McEstimate, float]]:
    det = config.detector()
    channel = config.channel()
    mu = config.mc_mu
    base = dict(trials=config.mc_trials, seed=config.seed, mu=mu, channel=channel,
                detector=det, e_d=config.e_d)
    rows = [("Q", estimate_gain(McConfig(**base)), overall_gain(mu, channel, det))]
    for k in range(1, len(det.decoy_settings)):
        est = estimate_gain(McConfig(decoy_index=k, **base))
        rows.append((f"Q_{k + 1}", est, decoy_gain(mu, channel, det, k)))
    try:
        e_b = estimate_qber(McConfig(**base))
    except DegenerateError as exc:
        print(f"note: {exc}; e_b reported as 0", file=sys.stderr)
        e_b = McEstimate(0.0, 0.0, config.mc_trials, config.seed)
    rows.append(("e_b", e_b, _analytic_qber(mu, channel, det, config.e_d)))
    return rows


def cmd_mc(config: RunConfig, out: TextIO) -> list[tuple[str, McEstimate, float]]:
    rows = mc_rows(config)
    out.write(header(config, {"generator": GENERATOR}))
    out.write("quantity,estimate,std_error,analytic,z_score\n")
    for name, est, target in rows:
        out.write(f"{name},{fmt(est.mean)},{fmt(est.std_error)},{fmt(target)},{fmt(est.z_score(target))}\n")
    return rows


# -- argument handling ------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value parameter file")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--L", type=int, help="pulses per train")
    p.add_argument("--e-d", dest="e_d", type=float, help="misalignment error rate")
    p.add_argument("--slack", type=float, help="two-sided slack on the click-rate rows")
    p.add_argument("--n-max", dest="n_max", type=int, help="photon-number truncation")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddrrdps", description="Detector-decoy RRDPS key-rate engine")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="optimized key rate over a distance grid (CSV)")
    _common(scan)
    scan.add_argument("--d-min", dest="d_min", type=float)
    scan.add_argument("--d-max", dest="d_max", type=float)
    scan.add_argument("--d-step", dest="d_step", type=float)
    scan.add_argument("--no-warm-start", action="store_true", help="optimize each distance independently")
    scan.add_argument("--workers", type=int, default=1, help="processes (only without warm start)")

    opt = sub.add_parser("optimize", help="single optimized point with intermediates")
    _common(opt)
    opt.add_argument("-d", "--distance", type=float)
    opt.add_argument("--mu", type=float, help="evaluate at this mean photon number instead of optimizing")
    opt.add_argument("--v-th", dest="v_th", type=int, help="photon-number threshold for --mu")

    lp = sub.add_parser("lp", help="solve an LP file, or emit the worst-case LP with --emit")
    _common(lp)
    lp.add_argument("problem", nargs="?", help="problem file in the line-oriented LP format")
    lp.add_argument("--emit", action="store_true", help="write the LP for --mu and --distance instead")
    lp.add_argument("-d", "--distance", type=float)
    lp.add_argument("--mu", type=float)

    mc = sub.add_parser("mc", help="Monte-Carlo check of Q, Q_k and e_b")
    _common(mc)
    mc.add_argument("-d", "--distance", type=float)
    mc.add_argument("--mu", type=float)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--trials", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {}
    for flag, attr in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None and not (flag == "mu" and args.command != "mc"):
            changes[attr] = value
    if getattr(args, "no_warm_start", False):
        changes["warm_start"] = False
    return config.replace(**changes) if changes else config


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        with _sink(config.output) as out:
            if args.command == "scan":
                if args.workers < 1:
                    raise ConfigError("--workers must be >= 1")
                cmd_scan(config, out, args.workers)
            elif args.command == "optimize":
                cmd_optimize(config, out, args.mu, args.v_th)
            elif args.command == "lp":
                if args.emit == (args.problem is not None):
                    raise ConfigError("give either a problem file or --emit")
                cmd_lp(args.problem, out, config, args.mu)
            else:
                cmd_mc(config, out)
    except (ValueError, ArithmeticError, RuntimeError, OSError, IndexError) as exc:
        print(f"ddrrdps {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
