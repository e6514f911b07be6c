"""Command-line runner.

Exit codes: 0 success (Proceed), 1 concentration bound violated, 2 Abort,
64 bad configuration or arguments, 74 I/O failure.

CSV columns:

* ``figure 3``: theta, eta, threshold
* ``figure 4|5``: theta, psi1, psi2, eta, threshold
* ``attack-scan``: epsilon, eta, region, attack_value, threshold_eta, threshold_ideal
* ``keyrate``: repetition, seed, rounds, conclusive, fraction, analytic, mismatches

Floats are written with 12 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bell, config, transcript
from .adversary import attack_advantage
from .errors import ConfigError, DomainError, RestartRequired
from .finite_stats import CHSH_RANGE, UNIT_RANGE, validate_concentration
from .protocol import (
    Database,
    Transcript,
    alice_guess_success,
    derive_seed,
    describe_source,
    qpq_rounds,
    run_certification,
    run_full_protocol,
)

EXIT_OK = 0
EXIT_BOUND = 1
EXIT_ABORT = 2
EXIT_CONFIG = 64
EXIT_IO = 74

FIGURE_PSI = ((math.pi / 4, 3 * math.pi / 4), (3 * math.pi / 16, 13 * math.pi / 16), (9 * math.pi / 32, 23 * math.pi / 32))
FIGURE_ETA = {4: 1.0, 5: 0.83}
FIGURE3_ETAS = tuple(round(0.83 + 0.01 * k, 2) for k in range(18))


def fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def theta_grid(points: int) -> list[float]:
    """``i (pi/2) / points`` for ``i = 1..points``; ends exactly at pi/2."""
    return [i * (math.pi / 2) / points for i in range(1, points + 1)]


def figure_rows(figure: int, points: int = 64) -> tuple[list[str], list[list]]:
    thetas = theta_grid(points)
    if figure == 3:
        psi1, psi2 = FIGURE_PSI[0]
        rows = [[t, eta, bell.threshold_with_eta(t, psi1, psi2, eta)] for t in thetas for eta in FIGURE3_ETAS]
        return ["theta", "eta", "threshold"], rows
    if figure in FIGURE_ETA:
        eta = FIGURE_ETA[figure]
        rows = [
            [t, psi1, psi2, eta, bell.threshold_with_eta(t, psi1, psi2, eta)]
            for psi1, psi2 in FIGURE_PSI
            for t in thetas
        ]
        return ["theta", "psi1", "psi2", "eta", "threshold"], rows
    raise DomainError(f"figure must be 3, 4 or 5, got {figure!r}", field="figure")


def attack_scan_rows(cfg: config.ExperimentConfig) -> tuple[list[str], list[list]]:
    p, sc = cfg.params, cfg.scan
    n = sc.resolution
    eps_grid = np.linspace(sc.epsilon_min, sc.epsilon_max, n) if n > 1 else np.array([sc.epsilon_min])
    eta_grid = np.linspace(sc.eta_min, sc.eta_max, n) if n > 1 else np.array([sc.eta_min])
    ideal = bell.chsh_ideal(p.theta, p.psi1, p.psi2)
    rows = []
    for eps in eps_grid.tolist():
        for eta in eta_grid.tolist():
            region = bell.classify_attack_region(p.theta, p.psi1, p.psi2, eps, eta)
            value = bell.attack_chsh_value(p.theta, p.psi1, p.psi2, eps, eta)
            t_eta = bell.threshold_with_eta(p.theta, p.psi1, p.psi2, eta) if eta > bell.ETA_LOOPHOLE else math.nan
            rows.append([eps, eta, region.value, value, t_eta, ideal])
    return ["epsilon", "eta", "region", "attack_value", "threshold_eta", "threshold_ideal"], rows


def render_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="ascii", newline="\n")


def _load(args) -> config.ExperimentConfig:
    cfg = config.load(args.config)
    p = cfg.params
    if getattr(args, "seed", None) is not None:
        try:
            p = replace(p, seed=args.seed)
        except DomainError as exc:
            raise ConfigError(f"--seed: {exc}") from exc
    cfg = replace(cfg, params=p)
    if getattr(args, "method", None):
        cfg = replace(cfg, method=args.method)
    if getattr(args, "repetitions", None) is not None:
        if args.repetitions < 1:
            raise ConfigError("--repetitions must be >= 1")
        cfg = replace(cfg, repetitions=args.repetitions)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


# -- subcommands ------------------------------------------------------------


def cmd_certify(args) -> int:
    cfg = _load(args)
    p = cfg.params
    status = EXIT_OK
    for r in range(cfg.repetitions):
        params = p if r == 0 else replace(p, seed=derive_seed(p.seed, 8, r))
        res = run_certification(params, cfg.source(), cfg.clicks(), cfg.method, cfg.estimator, workers=cfg.workers)
        stat = "Y" if cfg.method == "game" else "I"
        print(
            f"seed={params.seed} {stat}={fmt(res.observed)} threshold={fmt(res.threshold)} "
            f"xi={fmt(res.xi)} eta_hat={fmt(res.eta_hat)} verdict={res.verdict}"
        )
        if not res.verdict.proceed:
            status = EXIT_ABORT
        out = args.out or cfg.transcript_path
        if r == 0 and out:
            t = Transcript(
                params=params, method=cfg.method, source=describe_source(cfg.source()), policy=repr(cfg.clicks()),
                records=res.records, verdict=res.verdict, observed=res.observed, threshold=res.threshold,
                xi=res.xi, eta_hat=res.eta_hat,
            )
            transcript.write(t, out)
    return status


def cmd_figure(args) -> int:
    header, rows = figure_rows(args.figure, args.points)
    _emit(render_csv(header, rows), args.out)
    return EXIT_OK


def cmd_attack_scan(args) -> int:
    cfg = _load(args)
    header, rows = attack_scan_rows(cfg)
    _emit(render_csv(header, rows), args.out or cfg.csv_path)
    return EXIT_OK


def cmd_keyrate(args) -> int:
    cfg = _load(args)
    p = cfg.params
    eps = cfg.source_epsilon if cfg.source_kind == "biased" else p.agreed_epsilon
    p1 = cfg.alice_basis_p1()
    analytic = alice_guess_success(p.theta, eps) if cfg.alice_basis == "matched" else 0.5 * math.sin(p.theta) ** 2
    rows = []
    for r in range(cfg.repetitions):
        seed = p.seed if r == 0 else derive_seed(p.seed, 8, r)
        raw = qpq_rounds(cfg.source(), p.theta, p.n_key, seed, p1, p.loss)
        rows.append([r, seed, len(raw), int(raw.conclusive.sum()), raw.known_fraction(), analytic, raw.mismatches()])
    header = ["repetition", "seed", "rounds", "conclusive", "fraction", "analytic", "mismatches"]
    _emit(render_csv(header, rows), args.out or cfg.csv_path)
    if eps:
        print(f"# bias advantage 2 eps^2 sin^2 theta = {fmt(attack_advantage(p.theta, eps))}", file=sys.stderr)
    return EXIT_OK


def cmd_protocol(args) -> int:
    cfg = _load(args)
    db = Database.from_text(Path(args.database).read_text(encoding="ascii"))
    try:
        t = run_full_protocol(
            cfg.params, cfg.source(), db, args.index, cfg.clicks(), cfg.method,
            cfg.alice_basis_p1(), cfg.max_attempts, cfg.workers,
        )
    except RestartRequired as exc:
        print(f"restart limit reached: {exc}", file=sys.stderr)
        return EXIT_ABORT
    out = args.out or cfg.transcript_path
    if out:
        transcript.write(t, out)
    if not t.verdict.proceed:
        print(f"verdict={t.verdict} observed={fmt(t.observed)} threshold={fmt(t.threshold)} xi={fmt(t.xi)}")
        return EXIT_ABORT
    q = t.query
    print(f"verdict={t.verdict} attempts={t.attempts} index={q.alice_index} retrieved={q.retrieved}")
    return EXIT_OK


def cmd_concentration(args) -> int:
    cfg = _load(args)
    stat_range = UNIT_RANGE if cfg.params.xi_range == "printed" else CHSH_RANGE
    rep = validate_concentration(cfg.params, cfg.repetitions, stat_range, source=cfg.source(), workers=cfg.workers)
    print(
        f"repetitions={rep.repetitions} failures={rep.failures} fraction={fmt(rep.failure_fraction)} "
        f"allowance={fmt(rep.allowance)} xi={fmt(rep.xi)} within_bound={rep.within_bound}"
    )
    return EXIT_OK if rep.within_bound else EXIT_BOUND


# -- entry point ------------------------------------------------------------


def _u64(s: str) -> int:
    v = int(s, 0)
    if not (0 <= v < 2**64):
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diqpq", description="Device-independent QPQ simulator with inefficient detectors.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output path"):
        sp.add_argument("--config", required=True, help="experiment config (TOML)")
        sp.add_argument("--seed", type=_u64, help="override protocol.seed")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--workers", type=int, help="worker threads")

    sp = sub.add_parser("certify", help="run the Bell test and print the verdict")
    common(sp, "transcript path")
    sp.add_argument("--method", choices=("game", "test"))
    sp.add_argument("--repetitions", type=int)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("figure", help="threshold curves as CSV")
    sp.add_argument("--figure", type=int, choices=(3, 4, 5), required=True)
    sp.add_argument("--points", type=int, default=64, help="theta grid size")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_figure)

    sp = sub.add_parser("attack-scan", help="attack region over an (epsilon, eta) grid")
    common(sp, "CSV path")
    sp.set_defaults(func=cmd_attack_scan)

    sp = sub.add_parser("keyrate", help="key-phase conclusive rates")
    common(sp, "CSV path")
    sp.add_argument("--repetitions", type=int)
    sp.set_defaults(func=cmd_keyrate)

    sp = sub.add_parser("protocol", help="full run with a database query")
    common(sp, "transcript path")
    sp.add_argument("--method", choices=("game", "test"))
    sp.add_argument("--database", required=True, help="file of 0/1 characters")
    sp.add_argument("--index", type=int, required=True)
    sp.set_defaults(func=cmd_protocol)

    sp = sub.add_parser("concentration", help="empirical check of the finite-sample margin")
    common(sp)
    sp.add_argument("--repetitions", type=int)
    sp.set_defaults(func=cmd_concentration)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        return EXIT_OK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
