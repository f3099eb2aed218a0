"""Command-line interface.

Exit codes: 0 success, 1 objective/threshold not met, 2 usage or I/O error.
Port labels in all output are 1-based.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments
from .allocation import (MinDistance, MinPower, TargetPower, randomized_search, sweep_search,
                         unrestricted_search)
from .calibration import calibrate_global, calibrate_per_mzi
from .compiler import decompose, decompose_ideal
from .linalg import as_unitary, fidelity_distance, haar_random_unitary, matrix_from_json, matrix_to_json
from .mesh import ChipSpec, sample_chip
from .simulator import SimulatedChip, execute

EXIT_OK, EXIT_NOT_MET, EXIT_USAGE = 0, 1, 2
FULL_SEARCH_WARN_MODES = 5

BENCH_HELP = """CSV columns per figure:
  fig2  fig2_mean.csv: sample, default_power, unrestricted_power, sweep_power
        fig2_target.csv: sample, default_power, sweep_power
  fig3  fig3_ratio.csv / fig3_size.csv: sample, n, reflectivity, naive_distance, tailored_distance
  fig4  fig4_pipeline.csv: sample, naive, allocation, tailored, combined
  fig7  fig7_trace.csv: evaluation, reflectivity, objective; fig7_curve.csv: reflectivity, objective
  fig8  fig8_pipeline.csv: sample, naive, allocation, tailored, combined
Every figure also writes summary.csv (key, value)."""


class UsageError(Exception):
    """Bad input that should exit with status 2."""


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _load_unitary(path: str) -> np.ndarray:
    try:
        return as_unitary(matrix_from_json(_read_text(path)))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _load_chip(path: str) -> ChipSpec:
    try:
        return ChipSpec.from_json(_read_text(path))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _check_modes(U: np.ndarray, chip: ChipSpec) -> None:
    if U.shape[0] != chip.n_modes:
        raise UsageError(f"unitary has {U.shape[0]} modes but chip has {chip.n_modes}")


def _emit(text: str, out: str | None) -> None:
    if out:
        _write_text(out, text + "\n")
    else:
        print(text)


def _reflectivity(text: str) -> float:
    try:
        r = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < r < 1:
        raise argparse.ArgumentTypeError("reflectivity must lie strictly between 0 and 1")
    return r


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


# --- commands --------------------------------------------------------------------

def cmd_compile(args) -> int:
    U = _load_unitary(args.unitary)
    chip = _load_chip(args.chip)
    _check_modes(U, chip)
    program = decompose_ideal(U) if args.ideal else decompose(U, chip.thetas)
    distance = fidelity_distance(U, execute(program, chip))
    _emit(program.to_json(), args.out)
    print(f"fidelity_distance\t{distance:.6e}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _parse_objective(text: str, chip: ChipSpec, include_output: bool = True):
    if text == "power":
        return MinPower(chip, include_output)
    if text == "distance":
        return MinDistance(chip.thetas)
    if text.startswith("target:"):
        try:
            target = float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad target power in {text!r}") from None
        if not math.isfinite(target):
            raise UsageError("target power must be finite")
        return TargetPower(chip, target, include_output)
    raise UsageError(f"unknown objective {text!r}; use power, target:X or distance")


def _parse_strategy(text: str):
    if text in ("full", "random"):
        return text, None
    if text.startswith("sweep:"):
        try:
            k = int(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"bad sweep count in {text!r}") from None
        if k < 1:
            raise UsageError("sweep count k must be at least 1")
        return "sweep", k
    raise UsageError(f"unknown strategy {text!r}; use full, random or sweep:k")


def cmd_allocate(args) -> int:
    U = _load_unitary(args.unitary)
    chip = _load_chip(args.chip)
    _check_modes(U, chip)
    objective = _parse_objective(args.objective, chip, not args.exclude_output)
    strategy, k = _parse_strategy(args.strategy)
    n = U.shape[0]
    if strategy == "full":
        if n >= FULL_SEARCH_WARN_MODES:
            print(f"warning: unrestricted search evaluates ({n}!)^2 = {math.factorial(n) ** 2} allocations",
                  file=sys.stderr)
        try:
            result = unrestricted_search(U, objective, max_modes=args.max_modes)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        if args.threshold is not None:
            result = _with_threshold(result, args.threshold)
    elif strategy == "random":
        result = randomized_search(U, objective, args.max_candidates, args.threshold, seed=args.seed)
    else:
        result = sweep_search(U, objective, k=k, threshold=args.threshold)
    _emit(result.to_json(), args.out)
    table = sys.stdout if args.out else sys.stderr
    print("allocation\tobjective", file=table)
    print(f"default\t{result.baseline_value:.6g}", file=table)
    print(f"chosen\t{result.objective_value:.6g}", file=table)
    print(f"evaluations\t{result.evaluations}", file=table)
    if result.threshold_met is False:
        print(f"threshold {args.threshold} not met", file=sys.stderr)
        return EXIT_NOT_MET
    return EXIT_OK


def _with_threshold(result, threshold):
    return replace(result, threshold_met=bool(result.objective_value <= threshold))


def cmd_calibrate(args) -> int:
    chip = _load_chip(args.chip)
    device = SimulatedChip(chip, noise_sd=args.noise, seed=args.seed)
    if args.method == "per-mzi":
        result = calibrate_per_mzi(device, branch=args.branch)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = calibrate_global(device, args.guess, probe_reflectivity=args.probe,
                                      strategy=args.strategy)
        writer = csv.writer(sys.stderr if not args.out else sys.stdout, lineterminator="\n")
        writer.writerow(["reflectivity", "objective"])
        writer.writerows(result.trace)
    _emit(result.to_json(), args.out)
    if result.global_theta is not None and not result.bracketed:
        print("warning: minimum at the edge of the search interval", file=sys.stderr)
        return EXIT_NOT_MET
    return EXIT_OK


def cmd_bench(args) -> int:
    kwargs = {"seed": args.seed}
    if args.samples is not None:
        if args.figure == "fig7":
            raise UsageError("fig7 has no --samples (it runs a single calibration)")
        kwargs["samples"] = args.samples
    result = experiments.RECIPES[args.figure](**kwargs)
    paths = result.write(args.out)
    for key, value in sorted(result.summary.items()):
        print(f"{key}\t{value}")
    for p in paths:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def cmd_sample_unitary(args) -> int:
    _emit(matrix_to_json(haar_random_unitary(args.n, args.seed)), args.out)
    return EXIT_OK


def cmd_sample_chip(args) -> int:
    chip = sample_chip(args.n, args.reflectivity, args.sd, seed=args.seed)
    _emit(chip.to_json(), args.out)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshtailor",
        description="Compile, allocate and calibrate programs for Mach-Zehnder meshes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="decompose a unitary into a phase program")
    p.add_argument("unitary", help="unitary JSON file {n, re, im}")
    p.add_argument("chip", help="chip JSON file")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--tailored", action="store_true", help="compile for the chip's splitting ratios (default)")
    mode.add_argument("--ideal", action="store_true", help="compile for balanced beam-splitters")
    p.add_argument("--out", help="write the program here instead of stdout")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("allocate", help="search input/output port relabelings")
    p.add_argument("unitary")
    p.add_argument("chip")
    p.add_argument("--objective", default="power", help="power | target:X | distance (default power)")
    p.add_argument("--strategy", default="sweep:2", help="full | random | sweep:k (default sweep:2)")
    p.add_argument("--threshold", type=float, help="accept the first allocation at or below this value")
    p.add_argument("--exclude-output", action="store_true",
                   help="leave the output phase shifters out of power objectives")
    p.add_argument("--max-candidates", type=_positive_int, default=1000, help="budget for --strategy random")
    p.add_argument("--max-modes", type=_positive_int, default=6, help="size cap for --strategy full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("calibrate", help="estimate splitting ratios on a simulated chip")
    p.add_argument("chip", help="chip JSON file holding the true (hidden) parameters")
    p.add_argument("--method", choices=["per-mzi", "global"], default="global")
    p.add_argument("--guess", type=_reflectivity, default=0.5, help="initial reflectivity estimate (global)")
    p.add_argument("--probe", type=float, default=0.2, help="probe MZI reflectivity (global)")
    p.add_argument("--strategy", choices=["recompile", "model"], default="recompile",
                   help="how expected intensities are formed (global)")
    p.add_argument("--branch", choices=["low", "high"], default="low",
                   help="per-mzi: assume reflectivities <= 0.5 (low) or >= 0.5 (high)")
    p.add_argument("--noise", type=float, default=0.0, help="intensity noise standard deviation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="run a seeded benchmark recipe and write CSV",
                       epilog=BENCH_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("figure", choices=experiments.FIGURES)
    p.add_argument("--samples", type=_positive_int, help="number of Haar unitaries (recipe default if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench_out", help="output directory (default bench_out)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sample-unitary", help="write a Haar-random unitary")
    p.add_argument("n", type=_positive_int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample_unitary)

    p = sub.add_parser("sample-chip", help="write a random chip description")
    p.add_argument("n", type=_positive_int)
    p.add_argument("--reflectivity", type=_reflectivity, default=0.5, help="mean reflectivity")
    p.add_argument("--sd", type=float, default=0.0, help="reflectivity standard deviation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample_chip)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
