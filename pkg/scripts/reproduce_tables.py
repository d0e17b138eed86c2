"""Recompute the validated-C tables for the rescaled Lorenz and Henon-Heiles systems.

    python3 scripts/reproduce_tables.py                 # desk-scale rows
    python3 scripts/reproduce_tables.py --stretch       # add the expensive rows
    python3 scripts/reproduce_tables.py --only hh --out-dir certs/

Each row brackets C between half and 1.5 times the reference value, bisects
with exact validation at every step, and prints the validated C next to the
reference. Certificates are written when --out-dir is given.
"""
import argparse
import logging
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from minperiod.cli import RunConfig, run_bound
from minperiod.sdpengine import NoValidatedStart, SearchConfig
from minperiod.sosbuilder import DegreeConfig
from minperiod.systems import get_system


@dataclass(frozen=True)
class Row:
    system: str
    degrees: DegreeConfig
    reference_C: str
    stretch: bool = False

    @property
    def prune_rounds(self) -> int:
        return 5 if self.degrees.mode == "lie_span" else 0


ROWS = [
    Row("lorenz_rescaled", DegreeConfig("parity", 1, 4, 2), "5896"),
    Row("lorenz_rescaled", DegreeConfig("parity", 1, 6, 3), "3694"),
    Row("lorenz_rescaled", DegreeConfig("parity", 2, 6, 3), "2818"),
    Row("lorenz_rescaled", DegreeConfig("parity", 2, 8, 4), "1240", stretch=True),
    Row("lorenz_rescaled", DegreeConfig("parity", 3, 8, 4), "737", stretch=True),
    Row("lorenz_rescaled", DegreeConfig("parity", 3, 10, 5), "586.1", stretch=True),
    Row("lorenz_rescaled", DegreeConfig("parity", 4, 10, 5), "585.02", stretch=True),
    Row("henon_heiles", DegreeConfig.lie_span_preset(2), "485"),
    Row("henon_heiles", DegreeConfig.lie_span_preset(3), "431.13", stretch=True),
    Row("henon_heiles", DegreeConfig.lie_span_preset(4), "431.13", stretch=True),
]


def run_row(row: Row, rel_tol: float, out_dir: Path | None):
    ref = Fraction(row.reference_C)
    search = SearchConfig(ref * Fraction(3, 2), ref / 2, rel_tol=rel_tol, prune_rounds=row.prune_rounds)
    out = None
    if out_dir is not None:
        out = out_dir / f"{row.system}_{row.degrees.label().replace(' ', '_').replace('=', '')}.cert"
    cfg = RunConfig("bound", get_system(row.system), row.degrees, search, out, prune_rounds=row.prune_rounds)
    t0 = time.perf_counter()
    bound, result = run_bound(cfg)
    return bound, result, time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--stretch", action="store_true", help="include rows that need hours or more precision")
    ap.add_argument("--only", choices=("lorenz", "hh"))
    ap.add_argument("--rel-tol", type=float, default=1e-4)
    ap.add_argument("--out-dir", type=Path)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)

    print("| system | degrees | reference C | validated C | bound | solves | time |")
    print("|---|---|---|---|---|---|---|")
    for row in ROWS:
        if row.stretch and not args.stretch:
            continue
        if args.only == "lorenz" and not row.system.startswith("lorenz"):
            continue
        if args.only == "hh" and row.system != "henon_heiles":
            continue
        try:
            bound, result, dt = run_row(row, args.rel_tol, args.out_dir)
        except NoValidatedStart as exc:
            print(f"| {row.system} | {row.degrees.label()} | {row.reference_C} | none ({exc}) | | | |")
            continue
        print(f"| {row.system} | {row.degrees.label()} | {row.reference_C} | {float(bound.C):.6g} | "
              f"{bound.render()} | {len(result.history)} | {dt:.1f}s |", flush=True)


if __name__ == "__main__":
    main()
