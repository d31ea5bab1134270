"""Benchmark command line: assemble / fom / pgd / baseline / report / compare."""

import argparse
import os
import sys
from dataclasses import replace

from .harness import (
    ExperimentConfig,
    compare_runs,
    load_config,
    load_report,
    run_assemble,
    run_experiment,
)


def _add_common(parser):
    parser.add_argument("--config", help="path to a sectioned key-value config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="seed for deterministic start vectors")
    parser.add_argument(
        "--desk", action="store_true",
        help="desk-scale profile (small mesh, n_t=1200, 20 modes, r=100)",
    )


def _resolve_config(args, **overrides):
    if args.config:
        config = load_config(args.config)
    elif args.desk:
        config = ExperimentConfig.desk()
    else:
        config = ExperimentConfig()
    if args.desk and args.config:
        config = replace(
            config, divisions=(12, 3, 3), n_t=1200, m_max=20, r=100
        )
    if args.out:
        config = replace(config, directory=args.out)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        config = replace(config, **overrides)
    return config.validate()


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hampgd",
        description="Space-time PGD benchmark for Hamiltonian elastodynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assemble", help="export mesh (VTK) and operators (Matrix Market)")
    _add_common(p)

    p = sub.add_parser("fom", help="run the full-order Crank-Nicolson reference")
    _add_common(p)

    p = sub.add_parser("pgd", help="run the greedy PGD solver")
    _add_common(p)
    p.add_argument("--variant", choices=("lu", "ritz"), default=None)
    p.add_argument("--modes", type=int, default=None, help="number of enrichments")
    p.add_argument("--ritz", type=int, default=None, help="Ritz subspace size r")
    p.add_argument("--aitken", choices=("on", "off"), default=None)
    p.add_argument("--aitken-sign", choices=("paper", "classical"), default=None)

    p = sub.add_parser("baseline", help="run the SVD or Modal Decomposition baseline")
    _add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--svd", type=int, metavar="M", help="SVD baseline truncated at rank M")
    group.add_argument("--modal", type=int, metavar="R", help="Modal Decomposition with R modes")

    p = sub.add_parser("report", help="print the summary of a saved run")
    p.add_argument("rundir", help="run directory (containing report.json)")

    p = sub.add_parser("compare", help="compare saved runs (gain table)")
    p.add_argument("rundirs", nargs="+", help="run directories to compare")
    p.add_argument("--out", help="also write the comparison CSV here")

    args = parser.parse_args(argv)

    if args.command == "assemble":
        config = _resolve_config(args)
        mesh, K, M = run_assemble(config, args.out or config.directory or ".")
        print(f"assembled {mesh.n_dof} DOF ({mesh.n_tets} tets); "
              f"K nnz {K.nnz}, M nnz {M.nnz}")
        return 0

    if args.command == "fom":
        config = _resolve_config(args, variant="fom")
        report = run_experiment(config)
        print(f"FOM {report.n_dof} DOF, n_t={report.n_t}: "
              f"{report.timings['fom']:.3f}s")
        return 0

    if args.command == "pgd":
        overrides = dict(
            variant=None if args.variant is None else f"pgd-{args.variant}",
            m_max=args.modes,
            r=args.ritz,
            aitken=None if args.aitken is None else args.aitken == "on",
            aitken_sign=args.aitken_sign,
        )
        config = _resolve_config(args, **overrides)
        if not config.variant.startswith("pgd"):
            config = replace(config, variant="pgd-ritz").validate()
        report = run_experiment(config)
        err = "n/a" if report.final_error is None else f"{report.final_error:.3e}"
        print(
            f"{report.variant} {report.n_dof} DOF, {len(report.iterations)} modes, "
            f"solver {report.solver_seconds:.3f}s, eps_rom {err}"
        )
        if report.termination:
            print(f"early termination: {report.termination}")
        return 0

    if args.command == "baseline":
        if args.svd is not None:
            config = _resolve_config(args, variant="svd", m_max=args.svd)
        else:
            config = _resolve_config(args, variant="modal", r=args.modal)
        report = run_experiment(config)
        err = "n/a" if report.final_error is None else f"{report.final_error:.3e}"
        print(f"{report.variant}: solver {report.solver_seconds:.3f}s, eps_rom {err}")
        return 0

    if args.command == "report":
        report = load_report(args.rundir)
        print(f"variant:   {report.variant}")
        print(f"n_dof:     {report.n_dof}")
        print(f"n_t:       {report.n_t}")
        for stage, seconds in report.timings.items():
            print(f"{stage:>20}: {seconds:.3f}s")
        if report.errors:
            for m, e in zip(report.error_modes, report.errors):
                print(f"  eps_rom(m={m}) = {e:.6e}")
        if report.termination:
            print(f"termination: {report.termination}")
        return 0

    if args.command == "compare":
        reports = [load_report(d) for d in args.rundirs]
        table = compare_runs(reports)
        print(table.to_text())
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            table.write_csv(os.path.join(args.out, "compare.csv"))
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
