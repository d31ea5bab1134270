"""Experiment configuration, orchestration and report emission.

A run builds the beam problem from an `ExperimentConfig`, executes one solver
chain (full-order reference, PGD LU, PGD Ritz, SVD or Modal Decomposition
baseline), measures per-stage wall times, evaluates energy-norm errors per
mode against the full-order solution and writes CSV/JSON reports.

CSV schemas (version tag embedded as the first comment line):
  errors.csv      hampgd-errors-v1       mode,eps_rom
  iterations.csv  hampgd-iterations-v1   mode,iterations,converged
  timings.csv     hampgd-timings-v1      stage,seconds
  summary.csv     hampgd-summary-v1      one row per run (Table-1 style)

Wall-clock timings are reproducible only in distribution, so they live in
their own files; errors.csv and iterations.csv are bitwise deterministic for
a fixed config and seed.
"""

import configparser
import json
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, replace
from time import perf_counter

import numpy as np
import scipy

from .fullorder import (
    Trajectory,
    modal_reference,
    rom_error,
    save_trajectory,
    solve_fom,
    svd_reference,
)
from .mesh_fem import (
    Material,
    assemble_neumann_load,
    assemble_operators,
    build_beam_mesh,
    export_operators_mm,
    write_vtk_mesh,
)
from .pgd import (
    LuPgdProblem,
    PgdConfig,
    RitzPgdProblem,
    export_modes_vtk,
    export_temporal_csv,
    greedy_solve,
    save_solution,
)
from .ritz import compute_ritz_pairs, save_ritz_basis
from .sparsela import SpdFactor
from .timegrid import TimeGrid, TriangleSignal, build_time_operators

VARIANTS = ("fom", "pgd-lu", "pgd-ritz", "svd", "modal")


@dataclass
class ExperimentConfig:
    """Benchmark configuration; defaults reproduce the paper's setup.

    The mesh divisions are exposed directly (the reference DOF counts do not
    pin down a mesh); the `desk()` profile selects a minutes-scale variant.
    """

    # geometry
    lengths: tuple = (6.0, 1.0, 1.0)
    divisions: tuple = (12, 3, 3)
    # material
    E: float = 220e9
    nu: float = 0.3
    rho: float = 7000.0
    # load
    F: float = 0.5e9
    t1: float = 0.625
    t2: float = 0.75
    # time
    T: float = 5.0
    n_t: int = 4800
    # solver
    variant: str = "pgd-ritz"
    m_max: int = 50
    r: int = 300
    eps: float = 1e-9
    k_max: int = 35
    aitken: bool = True
    aitken_sign: str = "paper"
    error_stride: int = 1
    # outputs
    directory: str = ""
    formats: tuple = ("csv",)
    seed: int = 0

    @classmethod
    def desk(cls, **overrides):
        """Desk-scale profile: ~1.2k DOF, n_t = 1200, 20 modes, r = 100."""
        base = dict(divisions=(12, 3, 3), n_t=1200, m_max=20, r=100)
        base.update(overrides)
        return cls(**base)

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ValueError(f"invalid config: {msg}")

        need(all(v > 0 for v in self.lengths), "geometry.lengths must be positive")
        need(len(self.lengths) == 3 and len(self.divisions) == 3,
             "geometry needs 3 lengths and 3 divisions")
        need(all(int(v) >= 1 for v in self.divisions), "geometry.divisions must be >= 1")
        need(self.E > 0 and self.rho > 0, "material.E and material.rho must be positive")
        need(0 < self.nu < 0.5, "material.nu must lie in (0, 0.5)")
        need(self.F > 0, "load.F must be positive")
        need(0 < self.t1 < self.t2 <= self.T, "load must satisfy 0 < t1 < t2 <= T")
        need(self.T > 0 and self.n_t >= 1, "time.T > 0 and time.n_t >= 1 required")
        need(self.variant in VARIANTS, f"solver.variant must be one of {VARIANTS}")
        need(self.m_max >= 0, "solver.m_max must be nonnegative")
        need(self.eps > 0 and self.k_max >= 1, "solver.eps > 0 and solver.k_max >= 1")
        need(self.aitken_sign in ("paper", "classical"),
             "solver.aitken_sign must be 'paper' or 'classical'")
        need(self.error_stride >= 0, "solver.error_stride must be >= 0")
        if self.variant in ("pgd-ritz", "modal"):
            need(1 <= self.r, "solver.r must be >= 1")
        if self.variant == "pgd-ritz":
            need(self.m_max <= self.r, "solver.m_max must not exceed solver.r")
        return self

    # grouping of fields into config-file sections
    _SECTIONS = {
        "geometry": ("lengths", "divisions"),
        "material": ("E", "nu", "rho"),
        "load": ("F", "t1", "t2"),
        "time": ("T", "n_t"),
        "solver": ("variant", "m_max", "r", "eps", "k_max", "aitken",
                   "aitken_sign", "error_stride"),
        "outputs": ("directory", "formats"),
        "run": ("seed",),
    }

    def save(self, path):
        cp = configparser.ConfigParser()
        for section, names in self._SECTIONS.items():
            cp[section] = {}
            for name in names:
                value = getattr(self, name)
                if isinstance(value, tuple):
                    cp[section][name] = ", ".join(repr(v) for v in value)
                else:
                    cp[section][name] = repr(value) if isinstance(value, float) else str(value)
        with open(path, "w") as f:
            cp.write(f)

    # problem-construction helpers ------------------------------------------
    def material(self):
        return Material(E=self.E, nu=self.nu, rho=self.rho)

    def signal(self):
        return TriangleSignal(t1=self.t1, t2=self.t2, amplitude=self.F)

    def grid(self):
        return TimeGrid(T=self.T, n_steps=self.n_t)


def _parse_value(name, raw, default):
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if name in ("lengths",):
            return tuple(float(p) for p in parts)
        if name in ("divisions",):
            return tuple(int(p) for p in parts)
        return tuple(p.strip("'\"") for p in parts)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip().strip("'\"")


def load_config(path):
    """Read a sectioned key-value config file; absent fields take defaults."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ValueError(f"config file not found or unreadable: {path}")
    defaults = ExperimentConfig()
    values = {}
    for section, names in ExperimentConfig._SECTIONS.items():
        if not cp.has_section(section):
            continue
        for name in names:
            if cp.has_option(section, name):
                try:
                    values[name] = _parse_value(name, cp[section][name], getattr(defaults, name))
                except (TypeError, ValueError) as exc:
                    raise ValueError(
                        f"invalid config value [{section}] {name} = {cp[section][name]!r}: {exc}"
                    ) from exc
        known = set(names)
        for name in cp.options(section):
            if name not in known:
                raise ValueError(f"unknown config key [{section}] {name}")
    return ExperimentConfig(**values).validate()


@dataclass
class RunReport:
    """Per-run metrics: error series, iteration counts, stage timings."""

    schema: str
    variant: str
    n_dof: int
    n_t: int
    discretization: dict
    error_modes: list
    errors: list
    iterations: list
    converged: list
    timings: dict
    environment: dict
    aitken: bool
    aitken_sign: str
    seed: int
    termination: str = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")

    @property
    def solver_seconds(self):
        return self.timings.get("solver_total", 0.0)

    @property
    def final_error(self):
        return self.errors[-1] if self.errors else None


def load_report(path):
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    with open(path) as f:
        return RunReport.from_json(f.read())


def _environment_stamp():
    return {
        "platform": platform.platform(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_csvs(report, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "errors.csv"), "w") as f:
        f.write("# hampgd-errors-v1\nmode,eps_rom\n")
        for m, e in zip(report.error_modes, report.errors):
            f.write(f"{m},{e:.17g}\n")
    with open(os.path.join(directory, "iterations.csv"), "w") as f:
        f.write("# hampgd-iterations-v1\nmode,iterations,converged\n")
        for i, (it, cv) in enumerate(zip(report.iterations, report.converged), start=1):
            f.write(f"{i},{it},{int(cv)}\n")
    with open(os.path.join(directory, "timings.csv"), "w") as f:
        f.write("# hampgd-timings-v1\nstage,seconds\n")
        for stage, seconds in report.timings.items():
            f.write(f"{stage},{seconds:.6f}\n")
    with open(os.path.join(directory, "summary.csv"), "w") as f:
        f.write("# hampgd-summary-v1\n")
        f.write("n_dof,n_t,variant,solver_seconds,fom_seconds,eps_rom_final\n")
        err = "" if report.final_error is None else f"{report.final_error:.17g}"
        f.write(
            f"{report.n_dof},{report.n_t},{report.variant},"
            f"{report.solver_seconds:.6f},{report.timings.get('fom', 0.0):.6f},{err}\n"
        )


def build_problem_data(config):
    """Mesh, operators, load, grid and time operators for a config."""
    mesh = build_beam_mesh(config.lengths, config.divisions)
    K, M = assemble_operators(mesh, config.material())
    load = assemble_neumann_load(mesh, config.signal())
    grid = config.grid()
    ops = build_time_operators(grid)
    return mesh, K, M, load, grid, ops


def run_assemble(config, directory=None):
    """Export the assembled mesh and operators (Matrix Market + legacy VTK)."""
    config.validate()
    directory = directory or config.directory or "."
    os.makedirs(directory, exist_ok=True)
    mesh = build_beam_mesh(config.lengths, config.divisions)
    K, M = assemble_operators(mesh, config.material())
    export_operators_mm(K, M, directory)
    write_vtk_mesh(mesh, os.path.join(directory, "mesh.vtk"))
    return mesh, K, M


def run_experiment(config):
    """Execute one solver chain and collect a RunReport.

    All variants except "fom" also compute the full-order reference, used to
    evaluate the relative energy-norm error (per mode at `error_stride` for
    the PGD variants and the SVD baseline, at the final rank for Modal
    Decomposition).  Error evaluation is excluded from solver stage timings.
    """
    config.validate()
    wall0 = perf_counter()
    mesh, K, M, load, grid, ops = build_problem_data(config)
    assembly_seconds = perf_counter() - wall0
    eval_factor = SpdFactor(M, label="M")

    timings = {"assembly": assembly_seconds}
    error_modes, errors, iterations, converged = [], [], [], []
    termination = None
    solution = None
    eval_seconds = 0.0

    tic = perf_counter()
    fom = solve_fom(K, M, load, grid)
    timings["fom"] = perf_counter() - tic

    def evaluate(traj):
        nonlocal eval_seconds
        tic = perf_counter()
        eps = rom_error(fom, traj, K, M, ops, M_factor=eval_factor)
        eval_seconds += perf_counter() - tic
        return eps

    if config.variant == "fom":
        timings["solver_total"] = timings["fom"]
    elif config.variant in ("pgd-lu", "pgd-ritz"):
        tic = perf_counter()
        if config.variant == "pgd-ritz":
            basis = compute_ritz_pairs(K, M, config.r, seed=config.seed)
            problem = RitzPgdProblem(basis, M, load, grid, time_ops=ops)
        else:
            problem = LuPgdProblem(K, M, load, grid, time_ops=ops)
        timings["pre_processing"] = perf_counter() - tic

        stride = config.error_stride

        def callback(sol, record):
            if stride and (record.mode % stride == 0 or record.mode == config.m_max):
                error_modes.append(record.mode)
                errors.append(evaluate(sol.as_trajectory()))

        pgd_cfg = PgdConfig(
            n_modes=config.m_max,
            tol=config.eps,
            max_fp_iter=config.k_max,
            aitken=config.aitken,
            aitken_sign=config.aitken_sign,
        )
        tic = perf_counter()
        result = greedy_solve(problem, pgd_cfg, mode_callback=callback)
        greedy_wall = perf_counter() - tic
        solution = result.solution
        termination = result.termination
        iterations[:] = [rec.iterations for rec in result.records]
        converged[:] = [rec.converged for rec in result.records]
        timings["fixed_point"] = sum(r.seconds_fixed_point for r in result.records)
        timings["orthonormalization"] = sum(r.seconds_ortho for r in result.records)
        timings["temporal_update"] = sum(r.seconds_update for r in result.records)
        timings["solver_total"] = timings["pre_processing"] + greedy_wall - eval_seconds
        if solution.n_modes and (not error_modes or error_modes[-1] != solution.n_modes):
            error_modes.append(solution.n_modes)
            errors.append(evaluate(solution.as_trajectory()))
    elif config.variant == "svd":
        tic = perf_counter()
        Uq, sq, Vtq = np.linalg.svd(fom.Q, full_matrices=False)
        Up, sp_, Vtp = np.linalg.svd(fom.P, full_matrices=False)
        svd_seconds = perf_counter() - tic
        timings["svd"] = svd_seconds
        # the a-posteriori baseline needs the full-order snapshot first
        timings["solver_total"] = timings["fom"] + svd_seconds
        stride = config.error_stride or config.m_max
        for m in range(1, config.m_max + 1):
            if m % stride == 0 or m == config.m_max:
                k = min(m, sq.size)
                traj = Trajectory(
                    Q=(Uq[:, :k] * sq[:k]) @ Vtq[:k],
                    P=(Up[:, :k] * sp_[:k]) @ Vtp[:k],
                    grid=grid,
                )
                error_modes.append(m)
                errors.append(evaluate(traj))
    elif config.variant == "modal":
        tic = perf_counter()
        traj = modal_reference(K, M, config.r, load, grid, seed=config.seed)
        timings["solver_total"] = perf_counter() - tic
        error_modes.append(config.r)
        errors.append(evaluate(traj))

    timings["evaluation"] = eval_seconds
    timings["wall_total"] = perf_counter() - wall0

    report = RunReport(
        schema="hampgd-report-v1",
        variant=config.variant,
        n_dof=mesh.n_dof,
        n_t=config.n_t,
        discretization={
            "lengths": list(config.lengths),
            "divisions": list(config.divisions),
            "T": config.T,
            "n_t": config.n_t,
        },
        error_modes=error_modes,
        errors=errors,
        iterations=iterations,
        converged=converged,
        timings=timings,
        environment=_environment_stamp(),
        aitken=config.aitken,
        aitken_sign=config.aitken_sign,
        seed=config.seed,
        termination=termination,
    )

    if config.directory:
        directory = config.directory
        os.makedirs(directory, exist_ok=True)
        report.save(os.path.join(directory, "report.json"))
        _write_csvs(report, directory)
        if "npz" in config.formats:
            if solution is not None:
                save_solution(solution, os.path.join(directory, "solution.npz"))
            save_trajectory(fom, os.path.join(directory, "fom_trajectory.npz"))
            if config.variant == "pgd-ritz":
                save_ritz_basis(problem.basis, os.path.join(directory, "ritz_basis.npz"))
        if "vtk" in config.formats and solution is not None:
            export_modes_vtk(solution, mesh, directory, which="q")
        if "csv" in config.formats and solution is not None:
            export_temporal_csv(solution, os.path.join(directory, "temporal_modes.csv"))
        if "mm" in config.formats:
            export_operators_mm(K, M, directory)
    return report


def compare_runs(reports):
    """Cross-run gain table (Table-1 style) for runs on one discretization.

    Raises ValueError with the offending fields if the discretizations differ.
    """
    if len(reports) < 2:
        raise ValueError("need at least two reports to compare")
    ref = reports[0].discretization
    for rep in reports[1:]:
        if rep.discretization != ref:
            diff = {
                key: (ref.get(key), rep.discretization.get(key))
                for key in set(ref) | set(rep.discretization)
                if ref.get(key) != rep.discretization.get(key)
            }
            raise ValueError(f"discretizations differ: {diff}")

    rows = []
    for rep in reports:
        rows.append(
            {
                "variant": rep.variant,
                "n_dof": rep.n_dof,
                "solver_seconds": rep.solver_seconds,
                "eps_rom_final": rep.final_error,
            }
        )
    gains = [
        [
            (a["solver_seconds"] / b["solver_seconds"]) if b["solver_seconds"] else float("nan")
            for b in rows
        ]
        for a in rows
    ]
    return ComparisonTable(rows=rows, gains=gains)


@dataclass
class ComparisonTable:
    rows: list
    gains: list  # gains[i][j] = time_i / time_j

    def to_text(self):
        lines = []
        header = f"{'variant':>10} {'n_dof':>8} {'time (s)':>12} {'eps_rom':>12}"
        lines.append(header)
        for row in self.rows:
            err = "-" if row["eps_rom_final"] is None else f"{row['eps_rom_final']:.3e}"
            lines.append(
                f"{row['variant']:>10} {row['n_dof']:>8} "
                f"{row['solver_seconds']:>12.3f} {err:>12}"
            )
        lines.append("")
        lines.append("gain matrix (row time / column time):")
        names = [row["variant"] for row in self.rows]
        lines.append(" " * 11 + " ".join(f"{n:>10}" for n in names))
        for name, grow in zip(names, self.gains):
            lines.append(f"{name:>10} " + " ".join(f"{g:>10.3f}" for g in grow))
        return "\n".join(lines)

    def write_csv(self, path):
        names = [row["variant"] for row in self.rows]
        with open(path, "w") as f:
            f.write("# hampgd-compare-v1\n")
            f.write("variant,n_dof,solver_seconds,eps_rom_final,"
                    + ",".join(f"gain_vs_{n}" for n in names) + "\n")
            for row, grow in zip(self.rows, self.gains):
                err = "" if row["eps_rom_final"] is None else f"{row['eps_rom_final']:.17g}"
                f.write(
                    f"{row['variant']},{row['n_dof']},{row['solver_seconds']:.6f},{err},"
                    + ",".join(f"{g:.6f}" for g in grow) + "\n"
                )
