"""Command line: ``run``, ``check-orthogonality`` and ``throughput``."""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, DomainError, TicsError
from ..fts import PATTERN_SLOTS, demod_matrix
from ..simbus import BusModel, max_polled_ops_per_second
from .scenario import Scenario, load_scenario
from .simulation import run

THROUGHPUT_FLOOR = 2000


def throughput(dlc: int, model: BusModel = BusModel(), out=None) -> tuple:
    out = out or sys.stdout
    if not 0 <= dlc <= 8:
        raise DomainError(f"dlc {dlc} outside 0..8")
    ops = max_polled_ops_per_second(model, dlc)
    ok = ops >= THROUGHPUT_FLOOR
    print(f"dlc={dlc} bitrate={model.bitrate_bps} bps overhead={model.frame_overhead_bits} bits", file=out)
    print(f"max polled ops/s = {ops} = {float(ops):.1f}  floor {THROUGHPUT_FLOOR}  "
          f"{'PASS' if ok else 'FAIL'}", file=out)
    return ops, ok


def check_orthogonality(n_antennas: int, indices=None, verbose: bool = False, out=None) -> list:
    """Exact cross-demodulation over all ordered pairs of the first ``n`` walsh indices."""
    out = out or sys.stdout
    if not 1 <= n_antennas <= 63:
        raise DomainError(f"antenna count {n_antennas} outside 1..63")
    indices = list(indices or range(1, 64))[:n_antennas]
    re, im = demod_matrix(indices)
    rows = []
    for i, a in enumerate(indices):
        for j, b in enumerate(indices):
            want = PATTERN_SLOTS if i == j else 0
            value = (int(re[i, j]), int(im[i, j]))
            rows.append((a, b, value, value == (want, 0)))
    off = [r for r in rows if r[0] != r[1]]
    diag = [r for r in rows if r[0] == r[1]]
    if verbose:
        for a, b, (x, y), ok in rows:
            print(f"{a:2d} x {b:2d}  {x:+5d}{y:+5d}i  {'ok' if ok else 'FAIL'}", file=out)
    print(f"antennas={n_antennas} off-diagonal pairs={len(off)} exact zeros="
          f"{sum(r[3] for r in off)}", file=out)
    print(f"diagonals={len(diag)} exactly {PATTERN_SLOTS}={sum(r[3] for r in diag)}", file=out)
    print("PASS" if all(r[3] for r in rows) else "FAIL", file=out)
    return rows


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else Scenario()
    if args.config:
        scenario.config = args.config
    if args.duration is not None:
        scenario.duration_s = args.duration
    if args.seed is not None:
        scenario.seed = args.seed
    scenario.validate()
    _, report = run(scenario, args.out)
    print(report.to_json())
    return 0 if report.violations == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ticsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a deterministic simulation")
    p.add_argument("--config", help="configuration database (JSON); default: 3-antenna test array")
    p.add_argument("--scenario", help="scenario file (JSON)")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory for archive.csv and report.json")

    p = sub.add_parser("check-orthogonality", help="exact cross-demodulation sweep")
    p.add_argument("--antennas", type=int, required=True)
    p.add_argument("--verbose", action="store_true", help="print every pair")

    p = sub.add_parser("throughput", help="polled operations per second on the bus")
    p.add_argument("--dlc", type=int, required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check-orthogonality":
            rows = check_orthogonality(args.antennas, verbose=args.verbose)
            return 0 if all(r[3] for r in rows) else 1
        _, ok = throughput(args.dlc)
        return 0 if ok else 1
    except (DomainError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TicsError as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

