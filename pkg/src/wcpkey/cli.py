"""Command-line front end.

Subcommands::

    wcpkey sweep     optimized gain vs distance (CSV)
    wcpkey optimize  optimum mu and maximum secure distance
    wcpkey attack    unambiguous-discrimination attack report
    wcpkey simulate  Monte Carlo run compared against the analytic model
    wcpkey pa        sample privacy-amplification matrices

CSV and matrix files go to ``--out`` (``-`` for stdout); human-readable
reports go to stderr.  Exit status is 0 when every audit passes, 1 when
one fails and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import attack, postproc, protosim, rates
from .detection import SystemParams, detection_prob_Q, intrinsic_error_rate
from .source import SourceKind, SourceVariant

EXIT_OK, EXIT_AUDIT, EXIT_USAGE = 0, 1, 2
SOURCES = ("nonrandom", "random", "bright")
Z_LIMIT = 5.0
MIN_SIM_ROUNDS = 10_000

# parameter overrides: flag -> SystemParams field
_OVERRIDES = {
    "loss": "loss_db_per_km",
    "xi": "xi",
    "d0": "d0",
    "d1": "d1",
    "e_align": "e_align",
    "f_ec": "f_ec",
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    sources: tuple[str, ...]
    params: SystemParams
    d_min: float
    d_max: float
    step: float
    mu: float | None = None
    seed: int = 0
    rounds: int = 1_000_000
    out: str | None = None
    bright_ratio: float = rates.DEFAULT_BRIGHT_RATIO


def _common(p: argparse.ArgumentParser, distance_default, source_default=None):
    p.add_argument("--config", type=Path, help="parameter file (key=value lines)")
    p.add_argument("--source", choices=SOURCES, default=source_default)
    p.add_argument("--mu", type=float, help="mean photon number")
    p.add_argument(
        "--distance",
        type=float,
        nargs="+",
        metavar="KM",
        default=distance_default,
        help="MIN [MAX [STEP]] in km",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=1_000_000)
    p.add_argument("--out", help="output path, '-' for stdout")
    p.add_argument("--bright-ratio", type=float, default=rates.DEFAULT_BRIGHT_RATIO, help="|beta|^2/|alpha|^2")
    g = p.add_argument_group("parameter overrides")
    g.add_argument("--loss", type=float, help="fiber loss in dB/km")
    g.add_argument("--xi", type=float, help="detector efficiency")
    g.add_argument("--d0", type=float, help="dark count probability, detector 0")
    g.add_argument("--d1", type=float, help="dark count probability, detector 1")
    g.add_argument("--e-align", type=float, help="misalignment error")
    g.add_argument("--f-ec", type=float, help="error-correction inefficiency")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wcpkey", description="Weak coherent pulse BB84 key rates and attacks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="optimized gain vs distance")
    _common(p, [0.0, 50.0, 1.0])

    p = sub.add_parser("optimize", help="optimal mu and maximum secure distance")
    _common(p, [0.0])

    p = sub.add_parser("attack", help="UKD attack report")
    _common(p, [0.0])
    p.add_argument("--max-tagged", type=float, default=0.086, help="tagged-fraction budget for the mu threshold")

    p = sub.add_parser("simulate", help="Monte Carlo protocol run")
    _common(p, [20.0], source_default="nonrandom")
    p.add_argument("--eve", choices=("none", "ukd"), default="none")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("pa", help="sample privacy-amplification matrices")
    _common(p, [0.0])
    p.add_argument("--n", type=int, required=True, help="reconciled key length")
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--k", type=int, help="final key length")
    size.add_argument("--delta-prime", type=float, help="phase error rate; sets k")
    p.add_argument("--epsilon", type=float, default=0.0)
    return parser


def make_config(args: argparse.Namespace) -> RunConfig:
    try:
        params = SystemParams.from_file(args.config) if args.config else SystemParams()
        overrides = {f: getattr(args, flag) for flag, f in _OVERRIDES.items()}
        params = params.with_overrides(**overrides)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid parameters: {exc}") from None

    dist = list(args.distance)
    if not 1 <= len(dist) <= 3:
        raise UsageError("--distance takes MIN [MAX [STEP]]")
    d_min = dist[0]
    d_max = dist[1] if len(dist) > 1 else d_min
    step = dist[2] if len(dist) > 2 else 1.0
    if d_min < 0 or d_max < d_min or step <= 0 or not all(map(math.isfinite, dist)):
        raise UsageError(f"invalid distance range {dist}")

    if args.mu is not None and not (math.isfinite(args.mu) and args.mu >= 0):
        raise UsageError("--mu must be finite and >= 0")
    if not args.bright_ratio >= 1:
        raise UsageError("--bright-ratio must be >= 1")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")

    sources = (args.source,) if args.source else ("nonrandom", "random")
    return RunConfig(
        command=args.command,
        sources=sources,
        params=params,
        d_min=d_min,
        d_max=d_max,
        step=step,
        mu=args.mu,
        seed=args.seed,
        rounds=args.rounds,
        out=args.out,
        bright_ratio=args.bright_ratio,
    )


def _write(text: str, out: str | None, stdout) -> None:
    if out is None or out == "-":
        stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from None


def _curve(cfg: RunConfig, source: str) -> list[rates.RatePoint]:
    if cfg.mu is None:
        return rates.sweep_distance(
            source, cfg.d_min, cfg.d_max, cfg.step, cfg.params, bright_ratio=cfg.bright_ratio
        )
    n = int(math.floor((cfg.d_max - cfg.d_min) / cfg.step + 1e-9)) + 1
    return [
        rates.evaluate_point(source, cfg.mu, cfg.d_min + i * cfg.step, cfg.params, bright_ratio=cfg.bright_ratio)
        for i in range(n)
    ]


def _with_source_column(curves: dict[str, list[rates.RatePoint]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("source",) + rates.RatePoint.CSV_FIELDS)
    for source, points in curves.items():
        for pt in points:
            w.writerow((source,) + tuple(pt.csv_row()))
    return buf.getvalue()


def _cutoff(points: list[rates.RatePoint]) -> float | None:
    secure = [p.distance_km for p in points if p.G > 0]
    return max(secure) if secure else None


def cmd_sweep(cfg: RunConfig, stdout, stderr) -> int:
    curves = {s: _curve(cfg, s) for s in cfg.sources}
    for source, points in curves.items():
        cut = _cutoff(points)
        msg = "insecure over the whole range" if cut is None else f"last secure distance {cut:g} km"
        print(f"{source}: {msg}", file=stderr)
    if len(curves) == 1:
        (points,) = curves.values()
        _write(rates.rate_csv(points), cfg.out, stdout)
    elif cfg.out == "-":
        _write(_with_source_column(curves), "-", stdout)
    else:
        stem = cfg.out or "rates"
        for source, points in curves.items():
            _write(rates.rate_csv(points), f"{stem}_{source}.csv", stdout)
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, stdout, stderr) -> int:
    curves = {s: _curve(cfg, s) for s in cfg.sources}
    reach = {}
    for source in cfg.sources:
        reach[source] = rates.max_secure_distance(source, cfg.params, bright_ratio=cfg.bright_ratio)
        eta = cfg.params.xi * cfg.params.channel(cfg.d_min).transmission
        pt = curves[source][0]
        print(
            f"{source}: mu_opt={pt.mu:.6g} (mu/eta={pt.mu / eta:.4g}) G={pt.G:.6g} at {pt.distance_km:g} km; "
            f"max secure distance {reach[source]:.1f} km",
            file=stderr,
        )
    if "random" in reach and "nonrandom" in reach and reach["nonrandom"] > 0:
        print(f"distance ratio random/nonrandom = {reach['random'] / reach['nonrandom']:.3f}", file=stderr)
    text = rates.rate_csv(curves[cfg.sources[0]]) if len(curves) == 1 else _with_source_column(curves)
    _write(text, cfg.out, stdout)
    return EXIT_OK


def attack_report(mu: float, max_tagged: float = 0.086) -> dict:
    """Values shown by ``wcpkey attack``; each is a direct library call."""
    audit = attack.povm_audit(mu)
    return {
        "mu": mu,
        "p_conclusive_bit0": attack.conclusive_prob(0, mu),
        "p_conclusive_bit1": attack.conclusive_prob(1, mu),
        "resend_error_rate": attack.resend_error_rate(),
        "tagged_fraction_budget": attack.tagged_fraction_budget(),
        "mu_threshold": attack.secure_mu_threshold(max_tagged),
        **audit,
    }


def cmd_attack(cfg: RunConfig, stdout, stderr, max_tagged: float) -> int:
    mu = 0.02 if cfg.mu is None else cfg.mu
    report = attack_report(mu, max_tagged)
    for key, val in report.items():
        print(f"{key:24s} {val!r}" if isinstance(val, bool) else f"{key:24s} {val:.12g}", file=stderr)
    if cfg.out:
        _write("".join(f"{k}={v!r}\n" for k, v in report.items()), cfg.out, stdout)
    return EXIT_OK if report["ok"] else EXIT_AUDIT


def _z(observed: float, expected: float, n: int) -> float:
    se = math.sqrt(expected * (1 - expected) / n) if n else 0.0
    if se == 0.0:
        return 0.0 if observed == expected else math.inf
    return (observed - expected) / se


def cmd_simulate(cfg: RunConfig, stdout, stderr, eve: str, workers: int) -> int:
    if cfg.rounds < MIN_SIM_ROUNDS:
        raise UsageError(f"--rounds must be >= {MIN_SIM_ROUNDS}")
    source = cfg.sources[0]
    mu = (0.02 if eve == "ukd" else 0.1) if cfg.mu is None else cfg.mu
    if mu <= 0:
        raise UsageError("--mu must be positive for simulation")
    det = cfg.params.detector()
    chan = cfg.params.channel(cfg.d_min)
    if eve == "ukd":
        variant = SourceVariant(SourceKind.MODULATED_REF, math.sqrt(mu / 2))
        q_exp, e_exp = protosim.ukd_expected(mu, det)
        strategy = protosim.EveStrategy.UKD_INTERCEPT_RESEND
    else:
        if source == "random":
            raise UsageError("the simulator models reference-pulse sources only (nonrandom or bright)")
        strategy = protosim.EveStrategy.NONE
        if source == "bright":
            variant = SourceVariant(SourceKind.BRIGHT_REF, math.sqrt(mu), math.sqrt(mu * cfg.bright_ratio))
            ratio = cfg.bright_ratio
        else:
            variant = SourceVariant(SourceKind.UNMODULATED_REF, math.sqrt(mu / 2))
            ratio = None
        q_exp = detection_prob_Q(mu, chan, det, ratio)
        e_exp = intrinsic_error_rate(mu, chan, det, ratio)
    tally = protosim.run_protocol(
        cfg.rounds, variant, chan, det, eve=strategy, seed=cfg.seed, workers=workers
    )
    _write(protosim.tally_csv([tally]), cfg.out, stdout)

    q_hat = tally.detected / tally.sent
    n_sift = tally.sifted_x + tally.sifted_y
    e_hat = (tally.errors_x + tally.errors_y) / n_sift if n_sift else float("nan")
    z_q = _z(q_hat, q_exp, tally.sent)
    z_e = _z(e_hat, e_exp, n_sift) if n_sift else math.inf
    print(f"Q: observed {q_hat:.6g} expected {q_exp:.6g} z={z_q:+.2f}", file=stderr)
    print(f"e: observed {e_hat:.6g} expected {e_exp:.6g} z={z_e:+.2f} (sifted {n_sift})", file=stderr)
    ok = abs(z_q) <= Z_LIMIT and abs(z_e) <= Z_LIMIT
    if not ok:
        print(f"FAIL: |z| exceeds {Z_LIMIT}", file=stderr)
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_pa(cfg: RunConfig, stdout, stderr, n: int, k: int | None, delta_prime: float | None, epsilon: float) -> int:
    if n < 2:
        raise UsageError("--n must be >= 2")
    if k is None:
        k = postproc.pa_output_length(n, delta_prime, epsilon)
    if not 0 < k < n:
        raise UsageError(f"final key length k={k} must satisfy 0 < k < n")
    g, h = postproc.sample_pa_matrices(n, k, cfg.seed)
    rank_g, rank_h = g.rank(), h.rank()
    orth = not (g.T @ h).bits.any()
    print(f"n={n} k={k} rank(G)={rank_g} rank(H)={rank_h} G^T H = 0: {orth}", file=stderr)
    _write(postproc.dumps_pa(g, h), cfg.out, stdout)
    return EXIT_OK if (rank_g == k and rank_h == n - k and orth) else EXIT_AUDIT


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=stderr)
    try:
        cfg = make_config(args)
        if args.command == "sweep":
            return cmd_sweep(cfg, stdout, stderr)
        if args.command == "optimize":
            return cmd_optimize(cfg, stdout, stderr)
        if args.command == "attack":
            return cmd_attack(cfg, stdout, stderr, args.max_tagged)
        if args.command == "simulate":
            return cmd_simulate(cfg, stdout, stderr, args.eve, args.workers)
        if args.command == "pa":
            return cmd_pa(cfg, stdout, stderr, args.n, args.k, args.delta_prime, args.epsilon)
    except UsageError as exc:
        print(f"wcpkey {args.command}: error: {exc}", file=stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"wcpkey {args.command}: error: {exc}", file=stderr)
        return EXIT_USAGE
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
