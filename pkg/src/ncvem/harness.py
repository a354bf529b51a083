"""End-to-end driver: mesh sequences, solve, error norms, EOC, exports.

A study runs one discrete space on a refinement sequence, records the
projection-based error norms per level, computes experimental orders of
convergence between consecutive levels, and exports a CSV table, a plain
plot-data file, and a log-log convergence figure.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import linsolve
from .assembly import GlobalSystem, assemble_global, assemble_local, dump_matrix
from .dofspace import DofLayout, PRESETS, build_global_numbering
from .mesh import PolyMesh, build_remapped_hexagons, build_structured_triangles, load_mesh
from .polykernel import cell_basis, cell_quadrature
from .problems import ModelProblem, perturbation_problem, varying_coefficient_problem
from .projections import build_cell_projections

__all__ = [
    "ConfigError",
    "HarnessError",
    "RunConfig",
    "ConvergenceRecord",
    "ErrorNorms",
    "LevelResult",
    "solve_once",
    "compute_errors",
    "run_study",
    "export_csv",
    "export_plot_data",
    "render_figure",
    "records_to_csv_text",
    "eoc",
]

CSV_COLUMNS = (
    "level,h,dofs,energy_err,energy_eoc,h2_err,h2_eoc,h1_err,h1_eoc,"
    "l2_err,l2_eoc,cg_iters,seconds"
)

DENSE_FALLBACK_LIMIT = 20000


class ConfigError(ValueError):
    """Invalid run configuration."""


class HarnessError(RuntimeError):
    """Failure in a named pipeline stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    """One convergence study: space, order, problem, mesh family, levels."""

    space: str
    order: int
    problem: str
    eps: float = 1.0
    mesh_family: str = "simplex"
    mesh_path: str | None = None
    levels: tuple = (4, 8, 16, 32)
    tol: float = 1e-10
    max_iters: int | None = None
    output: str | None = None
    dump_matrix_path: str | None = None

    def validated(self) -> "RunConfig":
        if self.space not in PRESETS:
            raise ConfigError(f"unknown space {self.space!r}; choose from {sorted(PRESETS)}")
        if self.order not in (2, 3, 4):
            raise ConfigError("order must be 2, 3 or 4")
        if self.problem not in ("perturbation", "varcoef"):
            raise ConfigError("problem must be 'perturbation' or 'varcoef'")
        if not 0.0 < self.eps <= 1.0:
            raise ConfigError("eps must lie in (0, 1]")
        if self.mesh_family not in ("simplex", "hex", "file"):
            raise ConfigError("mesh family must be 'simplex', 'hex' or 'file'")
        if self.mesh_family == "file":
            if not self.mesh_path:
                raise ConfigError("mesh family 'file' needs a mesh path")
            levels = tuple(self.levels) if self.levels else (0,)
            if len(levels) != 1:
                raise ConfigError("a file mesh has a single level")
        else:
            levels = tuple(int(n) for n in self.levels)
            if not levels:
                raise ConfigError("at least one refinement level required")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ConfigError("levels must be strictly increasing")
        if self.tol <= 0:
            raise ConfigError("solver tolerance must be positive")
        return replace(self, levels=levels)


@dataclass
class ErrorNorms:
    energy: float
    h2: float
    h1: float
    l2: float


@dataclass
class ConvergenceRecord:
    """One row of the study table; EOC entries are None on the first level."""

    level: int
    h: float
    dofs: int
    energy_err: float
    h2_err: float
    h1_err: float
    l2_err: float
    energy_eoc: float | None = None
    h2_eoc: float | None = None
    h1_eoc: float | None = None
    l2_eoc: float | None = None
    cg_iters: int = 0
    seconds: float = 0.0


@dataclass
class LevelResult:
    solution: np.ndarray
    record: ConvergenceRecord
    mesh: PolyMesh
    layout: DofLayout
    projections: list
    system: GlobalSystem


def _make_problem(config: RunConfig) -> ModelProblem:
    if config.problem == "perturbation":
        return perturbation_problem(config.eps)
    return varying_coefficient_problem()


def _make_mesh(config: RunConfig, level: int) -> PolyMesh:
    if config.mesh_family == "simplex":
        return build_structured_triangles(level)
    if config.mesh_family == "hex":
        return build_remapped_hexagons(level)
    return load_mesh(config.mesh_path)


def eoc(err_prev: float, err: float, h_prev: float, h: float) -> float:
    """Experimental order of convergence between two refinement levels."""
    return float(np.log(err_prev / err) / np.log(h_prev / h))


def compute_errors(mesh, layout, projections, solution, problem, quad_degree=None):
    """Projection-based broken error norms of the discrete solution.

    Per cell, the exact solution and its derivatives are compared at
    quadrature points against the value/gradient/hessian projections of the
    gathered local dof vector.
    """
    order = projections[0].order
    qdeg = quad_degree if quad_degree is not None else 2 * order + 2
    coeffs = problem.coefficients
    energy2 = h2 = h1 = l2 = 0.0
    padded = np.concatenate([solution, [0.0]])  # index -1 -> constrained dof
    for k in range(mesh.num_cells):
        proj = projections[k]
        cell = mesh.cell_geometry(k)
        lam = layout.cell_signs[k] * padded[layout.cell_gids[k]]
        rule = cell_quadrature(cell.vertices, qdeg)
        w = rule.weights
        phi_l = proj.basis.evaluate(rule.points)
        phi_lm1 = cell_basis(cell, order - 1).evaluate(rule.points)
        phi_lm2 = cell_basis(cell, order - 2).evaluate(rule.points)

        u = problem.solution(rule.points)
        du = problem.solution_gradient(rule.points)
        d2u = problem.solution_hessian(rule.points)

        val_err = u - phi_l @ (proj.P0 @ lam)
        grad_err = du - np.stack(
            [phi_lm1 @ (proj.P1[0] @ lam), phi_lm1 @ (proj.P1[1] @ lam)], axis=1
        )
        hess_err = d2u - np.stack(
            [
                np.stack([phi_lm2 @ (proj.P2[i, j] @ lam) for j in range(2)], axis=1)
                for i in range(2)
            ],
            axis=1,
        )
        v2 = val_err**2
        g2 = (grad_err**2).sum(axis=1)
        s2 = (hess_err**2).sum(axis=(1, 2))
        energy2 += float(w @ (coeffs.kappa(rule.points) * s2))
        energy2 += float(w @ (coeffs.beta(rule.points) * g2))
        energy2 += float(w @ (coeffs.gamma(rule.points) * v2))
        h2 += float(w @ s2)
        h1 += float(w @ g2)
        l2 += float(w @ v2)
    return ErrorNorms(
        energy=float(np.sqrt(energy2)),
        h2=float(np.sqrt(h2)),
        h1=float(np.sqrt(h1)),
        l2=float(np.sqrt(l2)),
    )


def _solve_level(config: RunConfig, level: int, clock=time.perf_counter) -> LevelResult:
    config = config.validated()
    preset = PRESETS[config.space]
    problem = _make_problem(config)
    t0 = clock()
    try:
        mesh = _make_mesh(config, level)
    except Exception as exc:
        raise HarnessError("mesh", str(exc)) from exc
    try:
        tup = preset.dof_tuple(config.order)
        layout = build_global_numbering(mesh, tup)
    except Exception as exc:
        raise HarnessError("layout", str(exc)) from exc
    try:
        projections = [
            build_cell_projections(
                mesh.cell_geometry(k), tup, config.order, modified=preset.modified_gradient
            )
            for k in range(mesh.num_cells)
        ]
    except Exception as exc:
        raise HarnessError("projections", f"cell rejected: {exc}") from exc
    try:
        locals_ = [
            assemble_local(mesh.cell_geometry(k), tup, projections[k], problem.coefficients)
            for k in range(mesh.num_cells)
        ]
        system = assemble_global(mesh, layout, locals_)
        if config.dump_matrix_path:
            dump_matrix(system.matrix, config.dump_matrix_path)
    except Exception as exc:
        raise HarnessError("assembly", str(exc)) from exc
    try:
        if system.free_count == 0:
            solution, iters = np.zeros(0), 0
        else:
            try:
                solution, iters = linsolve.solve_cg(
                    system.matrix, system.rhs, tol=config.tol, max_iters=config.max_iters
                )
            except linsolve.IterationLimitError as exc:
                if system.free_count > DENSE_FALLBACK_LIMIT:
                    raise
                solution = linsolve.dense_cholesky_solve(system.matrix, system.rhs)
                iters = -1
    except Exception as exc:
        raise HarnessError("solve", str(exc)) from exc
    try:
        norms = compute_errors(mesh, layout, projections, solution, problem)
    except Exception as exc:
        raise HarnessError("errors", str(exc)) from exc
    record = ConvergenceRecord(
        level=level,
        h=mesh.h,
        dofs=system.free_count,
        energy_err=norms.energy,
        h2_err=norms.h2,
        h1_err=norms.h1,
        l2_err=norms.l2,
        cg_iters=iters,
        seconds=clock() - t0,
    )
    return LevelResult(
        solution=solution,
        record=record,
        mesh=mesh,
        layout=layout,
        projections=projections,
        system=system,
    )


def solve_once(config: RunConfig, level: int | None = None):
    """Run one level of the study; returns (solution dof vector, record)."""
    config = config.validated()
    if level is None:
        level = config.levels[0]
    result = _solve_level(config, level)
    return result.solution, result.record


def run_study(config: RunConfig, clock=time.perf_counter) -> list[ConvergenceRecord]:
    """Run every level, fill in EOC columns, and export tables and figures."""
    config = config.validated()
    if config.mesh_family != "file" and len(config.levels) < 2:
        raise ConfigError("a convergence study needs at least two levels")
    records: list[ConvergenceRecord] = []
    for level in config.levels:
        result = _solve_level(config, level, clock=clock)
        rec = result.record
        if records:
            prev = records[-1]
            rec.energy_eoc = eoc(prev.energy_err, rec.energy_err, prev.h, rec.h)
            rec.h2_eoc = eoc(prev.h2_err, rec.h2_err, prev.h, rec.h)
            rec.h1_eoc = eoc(prev.h1_err, rec.h1_err, prev.h, rec.h)
            rec.l2_eoc = eoc(prev.l2_err, rec.l2_err, prev.h, rec.h)
        records.append(rec)
    if config.output:
        out = Path(config.output)
        try:
            export_csv(records, out)
            export_plot_data(records, out.with_suffix(".dat"), config)
            render_figure(records, out.with_suffix(".png"), config)
        except Exception as exc:
            raise HarnessError("export", str(exc)) from exc
    return records


# ---------------------------------------------------------------------------
# exports

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.16e}"


def records_to_csv_text(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS.split(","))
    for r in records:
        writer.writerow(
            [
                r.level,
                _fmt(r.h),
                r.dofs,
                _fmt(r.energy_err),
                _fmt(r.energy_eoc),
                _fmt(r.h2_err),
                _fmt(r.h2_eoc),
                _fmt(r.h1_err),
                _fmt(r.h1_eoc),
                _fmt(r.l2_err),
                _fmt(r.l2_eoc),
                r.cg_iters,
                _fmt(r.seconds),
            ]
        )
    return buf.getvalue()


def export_csv(records, path) -> None:
    Path(path).write_text(records_to_csv_text(records), encoding="utf-8")


def export_plot_data(records, path, config: RunConfig | None = None) -> None:
    """Whitespace table of h against each error norm, for external plotting."""
    lines = []
    if config is not None:
        label = PRESETS[config.space].label
        lines.append(
            f"# space={label} order={config.order} problem={config.problem} eps={config.eps:g}"
        )
    lines.append("# h energy_err h2_err h1_err l2_err dofs")
    for r in records:
        lines.append(
            f"{r.h:.16e} {r.energy_err:.16e} {r.h2_err:.16e} "
            f"{r.h1_err:.16e} {r.l2_err:.16e} {r.dofs}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_figure(records, path, config: RunConfig | None = None) -> None:
    """Log-log error plot plus EOC-per-interval panel, written to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    h = np.array([r.h for r in records])
    fig, (ax_err, ax_eoc) = plt.subplots(1, 2, figsize=(10.0, 4.0))
    for name, attr in (("energy", "energy_err"), ("H2", "h2_err"), ("H1", "h1_err"), ("L2", "l2_err")):
        ax_err.loglog(h, [getattr(r, attr) for r in records], "o-", label=name)
    if config is not None and len(h) > 1:
        slope = config.order - 1
        ref = [r.energy_err for r in records][0] * (h / h[0]) ** slope
        ax_err.loglog(h, ref, "k--", lw=0.8, label=f"h^{slope}")
    ax_err.set_xlabel("h")
    ax_err.set_ylabel("error")
    ax_err.invert_xaxis()
    ax_err.legend(fontsize=8)
    ax_err.grid(True, which="both", alpha=0.3)

    eocs = [r.energy_eoc for r in records if r.energy_eoc is not None]
    if eocs:
        ax_eoc.semilogx(h[1:], eocs, "s-")
    ax_eoc.set_xlabel("h")
    ax_eoc.set_ylabel("energy EOC")
    ax_eoc.invert_xaxis()
    ax_eoc.grid(True, alpha=0.3)
    if config is not None:
        label = PRESETS[config.space].label
        fig.suptitle(
            f"{label}, order {config.order}, {config.problem}"
            + (f", eps={config.eps:g}" if config.problem == "perturbation" else "")
        )
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
