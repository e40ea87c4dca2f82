"""Command-line front end.

Every subcommand prints a JSON report (sorted keys) on stdout and optionally
writes it with ``--json``.  Exit status: 0 all checks pass, 1 a check failed,
2 bad arguments or input files, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .convexity import DIV_KINDS, Ensemble, definetti_check, quasiconc_check
from .divergence import dmax, measured_bracket, sandwiched, umegaki
from .io import FormatError, dumps_report, emit_csv, emit_json, read_matrix
from .purifier import verify_theorem
from .tensor import DensityState, DomainError, ResourceError, random_state, tensor_power
from .uhlmann import GAP_TOL, NMAX_DEFAULT, gap_scan, make_instance, measured_corollary_check, random_instance

DEFAULT_SEED = 2026
SEED_ENV = "PURIFY_LAB_SEED"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


def parse_alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number or 'inf', got {text!r}")
    if math.isnan(a) or a <= 0:
        raise argparse.ArgumentTypeError("alpha must be > 0")
    return a


def parse_seed(text: str) -> int:
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return s


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def resolve_seed(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return parse_seed(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{SEED_ENV}: {exc}")


def trial_rngs(seed: int, trials: int) -> list[np.random.Generator]:
    """Independent, reproducible streams, one per trial."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def _load_state(path: str) -> DensityState:
    return DensityState.from_operator(read_matrix(path), hermitize=False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="purify-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=1):
        sp.add_argument("--seed", type=parse_seed, default=None,
                        help=f"RNG seed (default: ${SEED_ENV}, else {DEFAULT_SEED})")
        sp.add_argument("--tol", type=float, default=None, help="pass/fail tolerance")
        sp.add_argument("--trials", type=_positive_int, default=trials, help="number of random instances")
        sp.add_argument("--json", metavar="PATH", help="also write the report to PATH")

    sp = sub.add_parser("verify-channel", help="check the purification-channel identity and CPTP")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--n", type=int, default=2)
    common(sp)

    sp = sub.add_parser("divergence", help="evaluate a divergence between two matrix files")
    sp.add_argument("--kind", choices=("umegaki", "sandwiched", "dmax", "measured"), required=True)
    sp.add_argument("--alpha", type=parse_alpha, default=None)
    sp.add_argument("--rho", required=True)
    sp.add_argument("--sigma", required=True)
    sp.add_argument("--json", metavar="PATH")

    sp = sub.add_parser("quasiconcavity", help="weak quasi-concavity margins on random ensembles")
    sp.add_argument("--kind", choices=DIV_KINDS, default="umegaki")
    sp.add_argument("--alpha", type=parse_alpha, default=None)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--members", type=_positive_int, default=4)
    common(sp, trials=10)

    sp = sub.add_parser("caratheodory", help="Caratheodory-reduced de Finetti mixtures")
    sp.add_argument("--kind", choices=DIV_KINDS, default="umegaki")
    sp.add_argument("--alpha", type=parse_alpha, default=None)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--members", type=_positive_int, default=50)
    common(sp, trials=3)

    sp = sub.add_parser("uhlmann-scan", help="per-copy gaps of the universal optimiser sequence")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--nmax", type=_positive_int, default=None)
    sp.add_argument("--divergence", choices=("umegaki", "sandwiched"), default="umegaki")
    sp.add_argument("--alpha", type=parse_alpha, default=None)
    sp.add_argument("--rho", help="extension rho_AB' (matrix file, dims [dA, dB'])")
    sp.add_argument("--sigma", help="reference sigma_A (matrix file)")
    sp.add_argument("--csv", metavar="PATH")
    common(sp)

    sp = sub.add_parser("measured-chain", help="certified measured-divergence chain at finite n")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--nmax", type=_positive_int, default=2)
    sp.add_argument("--alpha", type=parse_alpha, default=2.0)
    sp.add_argument("--rho")
    sp.add_argument("--sigma")
    common(sp)
    return p


def cmd_verify_channel(args, seed: int) -> dict:
    tol = 1e-9 if args.tol is None else args.tol
    if args.trials == 1:
        report = verify_theorem(args.d, args.n, tol=tol, seed=seed).to_dict()
    else:
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(args.trials)]
        runs = [verify_theorem(args.d, args.n, tol=tol, seed=s).to_dict() for s in seeds]
        report = {
            "d": args.d, "n": args.n, "seed": seed, "trials": runs,
            "gap_iid": max(r["gap_iid"] for r in runs),
            "gap_symmetric": max(r["gap_symmetric"] for r in runs),
            "cp_min_eig": min(r["cp_min_eig"] for r in runs),
            "tp_residual": max(r["tp_residual"] for r in runs),
            "pass": all(r["pass"] for r in runs),
        }
    report["tol"] = tol
    return report


def cmd_divergence(args, seed: int) -> dict:
    rho, sigma = _load_state(args.rho), _load_state(args.sigma)
    if rho.dim != sigma.dim:
        raise UsageError(f"rho has size {rho.dim}, sigma has size {sigma.dim}")
    report = {"kind": args.kind, "alpha": args.alpha}
    if args.kind == "umegaki":
        report.update(umegaki(rho, sigma).to_dict())
    elif args.kind == "dmax":
        report.update(dmax(rho, sigma).to_dict())
    else:
        if args.alpha is None:
            raise UsageError(f"--alpha is required for --kind {args.kind}")
        if args.kind == "sandwiched":
            report.update(sandwiched(rho, sigma, args.alpha).to_dict())
        else:
            b = measured_bracket(rho, sigma, args.alpha)
            report.update(lower=b.lower, upper=b.upper, pinching_value=b.pinching_value,
                          eta_alpha=b.eta_alpha, certified=b.certified)
    report["pass"] = True
    return report


def _needs_alpha(kind: str, alpha: float | None) -> None:
    if kind != "umegaki" and alpha is None:
        raise UsageError(f"--alpha is required for --kind {kind}")


def cmd_quasiconcavity(args, seed: int) -> dict:
    _needs_alpha(args.kind, args.alpha)
    rows = []
    for rng in trial_rngs(seed, args.trials):
        w = rng.dirichlet(np.ones(args.members))
        states = [random_state(args.d, rng) for _ in range(args.members)]
        sigma = random_state(args.d, rng)
        r = quasiconc_check(args.kind, args.alpha, Ensemble.from_lists(w, states), sigma)
        rows.append({"margin": r.margin, "slack_bound": r.slack_bound, "mixture_value": r.mixture_value,
                     "min_member_value": r.min_member_value, "flagged": r.flagged, "pass": r.passed})
    return {"kind": args.kind, "alpha": args.alpha, "d": args.d, "members": args.members, "seed": seed,
            "trials": rows, "min_margin": min(r["margin"] for r in rows), "pass": all(r["pass"] for r in rows)}


def cmd_caratheodory(args, seed: int) -> dict:
    _needs_alpha(args.kind, args.alpha)
    rows = []
    for rng in trial_rngs(seed, args.trials):
        w = rng.dirichlet(np.ones(args.members))
        nu = Ensemble.from_lists(w, [random_state(args.d, rng) for _ in range(args.members)])
        sigma = tensor_power(random_state(args.d, rng), args.n)
        r = definetti_check(nu, args.n, sigma, args.kind, args.alpha)
        rows.append({"n_original": r.n_original, "n_reduced": r.n_reduced, "bound": r.caratheodory_bound,
                     "mixture_residual": r.mixture_residual, "margin": r.slack.margin, "pass": r.passed})
    return {"kind": args.kind, "alpha": args.alpha, "d": args.d, "n": args.n, "seed": seed,
            "trials": rows, "pass": all(r["pass"] for r in rows)}


def _instances(args, seed: int):
    if (args.rho is None) != (args.sigma is None):
        raise UsageError("--rho and --sigma must be given together")
    if args.rho is not None:
        rho_ab = _load_state(args.rho)
        if len(rho_ab.dims) != 2:
            raise UsageError("--rho must be bipartite (dims [dA, dB'])")
        return [make_instance(rho_ab, _load_state(args.sigma))]
    return [random_instance(args.d, rng) for rng in trial_rngs(seed, args.trials)]


def cmd_uhlmann_scan(args, seed: int) -> tuple[dict, list[dict]]:
    if args.divergence == "sandwiched" and args.alpha is None:
        raise UsageError("--alpha is required for --divergence sandwiched")
    tol = GAP_TOL if args.tol is None else args.tol
    rows = []
    for inst in _instances(args, seed):
        n_max = args.nmax if args.nmax is not None else NMAX_DEFAULT.get(inst.sigma_a.dim, 1)
        for r in gap_scan(None, None, n_max, args.divergence, args.alpha, instance=inst):
            rows.append({"n": r.n, "divergence": args.divergence, "alpha": args.alpha,
                         "per_copy_value": r.per_copy_value, "baseline": r.baseline, "gap": r.gap,
                         "seed": seed, "state_digest": r.state_digest})
    ok = all(r["gap"] >= -tol for r in rows)
    return {"divergence": args.divergence, "alpha": args.alpha, "seed": seed, "tol": tol,
            "records": rows, "pass": ok}, rows


def cmd_measured_chain(args, seed: int) -> dict:
    tol = GAP_TOL if args.tol is None else args.tol
    runs = [measured_corollary_check(None, None, args.alpha, args.nmax, tol, instance=inst).to_dict()
            for inst in _instances(args, seed)]
    return {"alpha": args.alpha, "n_max": args.nmax, "seed": seed, "tol": tol, "trials": runs,
            "pass": all(r["pass"] for r in runs)}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    csv_rows = None
    try:
        seed = resolve_seed(getattr(args, "seed", None))
        if args.command == "verify-channel":
            report = cmd_verify_channel(args, seed)
        elif args.command == "divergence":
            report = cmd_divergence(args, seed)
        elif args.command == "quasiconcavity":
            report = cmd_quasiconcavity(args, seed)
        elif args.command == "caratheodory":
            report = cmd_caratheodory(args, seed)
        elif args.command == "uhlmann-scan":
            report, csv_rows = cmd_uhlmann_scan(args, seed)
        else:
            report = cmd_measured_chain(args, seed)
    except (UsageError, FormatError, DomainError, ResourceError, ValueError) as exc:
        print(f"purify-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"purify-lab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    report["command"] = args.command
    try:
        if args.json:
            emit_json(report, args.json)
        if getattr(args, "csv", None) and csv_rows is not None:
            emit_csv(csv_rows, args.csv)
    except OSError as exc:
        print(f"purify-lab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(dumps_report(report))
    return EXIT_OK if report["pass"] else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
