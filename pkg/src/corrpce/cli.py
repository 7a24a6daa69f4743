"""Command-line front end."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import scenarios
from .basis import build_basis, orthogonality_residual
from .scenarios import ScenarioConfig


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with ScenarioConfig fields (flags override it)")
    p.add_argument("--order", type=int, help="expansion order p")
    p.add_argument("--seed", type=int, help="random seed for sampled moments / Monte Carlo")
    p.add_argument("--samples", type=int, help="samples for Monte Carlo moment tables")
    p.add_argument("--out", help="output directory")
    p.add_argument("--abs-tol", type=float, dest="abs_tol")
    p.add_argument("--rel-tol", type=float, dest="rel_tol")
    p.add_argument("--n-times", type=int, dest="n_times", help="points on the output grid")
    p.add_argument("--moments", choices=("analytic", "mc"), dest="moment_source")


def _add_corr(p: argparse.ArgumentParser):
    p.add_argument("--corr", choices=("paper", "full", "none", "file"), help="enzyme correlation setting")
    p.add_argument("--corr-file", help="JSON correlation matrix, used with --corr file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="corrpce", description="Polynomial chaos for ODEs with correlated inputs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decay", help="decay equation with correlated Gaussian (alpha, beta)")
    _add_common(p)
    p.add_argument("--rho", type=float, help="correlation between alpha and beta, in [-1, 1]")

    p = sub.add_parser("enzyme", help="enzyme kinetics with correlated uniform rate constants")
    _add_common(p)
    _add_corr(p)

    p = sub.add_parser("converge", help="p-convergence study of the decay equation")
    _add_common(p)
    p.add_argument("--rho", type=float, action="append", help="correlation (repeatable)")
    p.add_argument("--jobs", type=int, help="worker processes")

    p = sub.add_parser("mc", help="Monte Carlo reference statistics")
    _add_common(p)
    _add_corr(p)
    p.add_argument("--target", choices=("decay", "enzyme"), dest="mc_target", help="model to sample")
    p.add_argument("--rho", type=float)
    p.add_argument("--mc-samples", type=int, dest="mc_samples")
    p.add_argument("--checkpoints", type=int)

    p = sub.add_parser("basis", help="build and export an orthogonal basis")
    _add_common(p)
    _add_corr(p)
    p.add_argument("--dist", choices=("decay", "enzyme"), default="decay")
    p.add_argument("--rho", type=float)
    return ap


def config_from_args(args) -> ScenarioConfig:
    base = ScenarioConfig.from_json(args.config).to_dict() if getattr(args, "config", None) else {}
    base["scenario"] = args.dist if args.command == "basis" else args.command
    for key in ("order", "seed", "samples", "out", "abs_tol", "rel_tol", "n_times", "moment_source",
                "mc_target", "mc_samples", "checkpoints", "jobs"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    rho = getattr(args, "rho", None)
    if rho is not None:
        if args.command == "converge":
            base["rhos"] = tuple(rho)
        else:
            base["rho"] = rho
    corr = getattr(args, "corr", None)
    if corr == "file":
        if not args.corr_file:
            raise SystemExit("--corr file needs --corr-file PATH")
        with open(args.corr_file) as fh:
            base["correlation"] = json.load(fh)
    elif corr is not None:
        base["correlation"] = corr
    return ScenarioConfig.from_dict(base)


def _print_final(summary: dict):
    for state, entry in summary["final"].items():
        print(f"{state}: mean={entry['mean']:.6f} std={entry['std']:.6f}")
        for label, s in entry.get("sobol", {}).items():
            print(f"  S_{label}: S={s['S']:+.6f} S_u={s['S_u']:+.6f} S_c={s['S_c']:+.6f}")


def _run_basis(args, config: ScenarioConfig) -> int:
    if args.dist == "decay":
        model, table, _ = scenarios.decay_setup(config.rho, config.p)
    else:
        model, table, _ = scenarios.enzyme_setup(
            config.correlation_matrix(), config.p, config.moment_source, config.samples, config.seed
        )
    basis = build_basis(table, config.p)
    res = orthogonality_residual(basis, table)
    print(f"basis: {basis.size} polynomials, order {basis.order}, orthogonality residual {res:.3e}")
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        basis.to_json(os.path.join(config.out, "basis.json"))
        table.to_json(os.path.join(config.out, "moments.json"))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = config_from_args(args)
        if args.command == "basis":
            return _run_basis(args, config)
        result = scenarios.run(config)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command in ("decay", "enzyme"):
        _print_final(result.summary)
    elif args.command == "converge":
        print("rho,p,eps_mu,eps_sigma")
        for r, p, em, es in result.rows:
            print(f"{r:g},{p},{em:.3e},{es:.3e}")
    else:
        for s, name in enumerate(result.state_names):
            print(f"{name}: final mean={result.mean[s, -1]:.6f} (se {result.se_mean[s, -1]:.1e}) "
                  f"std={result.std[s, -1]:.6f} (se {result.se_std[s, -1]:.1e})")
        if result.n_skipped:
            print(f"skipped samples: {result.n_skipped}")
    if config.out:
        print(f"outputs written to {config.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
