"""Numerical experiments: spectrum census, degeneracy sweeps, hull comparisons.

All experiments run through a HullStudy, which owns the grid and the drag
matrix and assembles one wave matrix per speed (cached), so that sweeps and
cross-evaluations of fixed hulls reuse the expensive pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .geometry import GridSpec, FlowParams, build_grid, full_lattice, wigley_hull, normalize_volume
from .solver import SolveReport, UzawaStepError, combine_objective, uzawa_solve
from .viscous import assemble_Md
from .wave import WaveMatrix, assemble_Mw

__all__ = [
    "SpectrumReport",
    "SweepRecord",
    "HullStudy",
    "spectrum",
    "half_hull_centroid",
    "boundary_layer_sweep",
    "froude_sweep",
    "wigley_compare",
    "bulbous_bow",
]

SPECTRUM_GUARD = 4000


# ---------------------------------------------------------------------------
# eigenvalue census
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumReport:
    """Spectrum of the geometric wave matrix, sorted by |eigenvalue| descending."""

    abs_eigenvalues: np.ndarray = field(repr=False)
    counts: dict[float, int]        # threshold -> #{signed eig > threshold * max}
    min_eigenvalue: float
    max_eigenvalue: float
    nx: int
    nz: int
    froude: float

    def __post_init__(self) -> None:
        if np.any(np.diff(self.abs_eigenvalues) > 0.0):
            raise ValueError("spectrum must be sorted descending")


def spectrum(wave_matrix: WaveMatrix, thresholds=(1e-15, 1e-12)) -> SpectrumReport:
    """Full symmetric eigen-decomposition of M_w with relative-count census."""
    n = wave_matrix.n
    if n > SPECTRUM_GUARD:
        raise ValueError(
            f"dense eigen-decomposition guarded at N <= {SPECTRUM_GUARD}; "
            f"got N = {n}, use a smaller grid")
    eig = np.linalg.eigvalsh(wave_matrix.matrix)
    emax = float(eig[-1])
    counts = {float(t): int(np.sum(eig > t * emax)) for t in thresholds}
    grid = wave_matrix.grid
    froude = 1.0 / math.sqrt(wave_matrix.v * grid.length)
    return SpectrumReport(
        abs_eigenvalues=np.sort(np.abs(eig))[::-1], counts=counts,
        min_eigenvalue=float(eig[0]), max_eigenvalue=emax,
        nx=grid.nx, nz=grid.nz, froude=froude)


# ---------------------------------------------------------------------------
# hull functionals
# ---------------------------------------------------------------------------

_GAUSS2 = (np.array([-1.0, 1.0]) / math.sqrt(3.0) + 1.0) / 2.0  # on [0, 1]


def half_hull_centroid(grid: GridSpec, f) -> tuple[float, float]:
    """Center of mass (xbar, zbar) of the Q1 interpolant on the half domain x <= 0.

    Exact per-cell Gauss integration (2x2 points integrate x*f and z*f
    exactly for bilinear f); a cell straddling x = 0 is split there.
    """
    lat = full_lattice(grid, f)
    m0 = mx = mz = 0.0
    for cx in range(grid.nx):
        x_lo, x_hi = grid.xs[cx], min(grid.xs[cx + 1], 0.0)
        if x_hi <= x_lo:
            break
        tx = (x_lo + (x_hi - x_lo) * _GAUSS2 - grid.xs[cx]) / grid.dx
        wx = (x_hi - x_lo) / 2.0
        xq = x_lo + (x_hi - x_lo) * _GAUSS2
        for cz in range(grid.nz):
            zq = grid.zs[cz] + grid.dz * _GAUSS2
            corners = lat[cz:cz + 2, cx:cx + 2]
            # f at the 2x2 tensor Gauss points
            fx0 = corners[0, 0] + tx * (corners[0, 1] - corners[0, 0])
            fx1 = corners[1, 0] + tx * (corners[1, 1] - corners[1, 0])
            fq = fx0[None, :] + _GAUSS2[:, None] * (fx1 - fx0)[None, :]  # (z, x)
            cellw = wx * grid.dz / 2.0
            m0 += cellw * float(fq.sum())
            mx += cellw * float((fq * xq[None, :]).sum())
            mz += cellw * float((fq * zq[:, None]).sum())
    if m0 == 0.0:
        raise ValueError("half hull has zero volume; the centroid is undefined")
    return mx / m0, mz / m0


@dataclass(frozen=True)
class BulbousBowReport:
    fires: bool
    column_x: float | None     # forward column with the strongest protrusion
    deep_max: float
    waterline_value: float
    ratio: float


def bulbous_bow(grid: GridSpec, f, x_max: float | None = None,
                z_min: float | None = None, margin: float = 0.05) -> BulbousBowReport:
    """Detect a bulbous bow: a bow column wider at depth than at the waterline.

    Scans free-node columns with x <= x_max (default -L/4) and compares the
    maximum over z >= z_min (default T/2) against the waterline value of the
    same column; fires when some column exceeds it by the relative margin.
    """
    if x_max is None:
        x_max = -grid.length / 4.0
    if z_min is None:
        z_min = grid.draft / 2.0
    lat = full_lattice(grid, f)
    deep_rows = grid.zs >= z_min - 1e-12 * grid.draft
    best = BulbousBowReport(False, None, 0.0, 0.0, 0.0)
    for ci in range(1, grid.nx):
        if grid.xs[ci] > x_max + 1e-12 * grid.length:
            break
        waterline = float(lat[0, ci])
        deep = float(lat[deep_rows, ci].max())
        if deep <= 0.0:
            continue
        ratio = deep / waterline if waterline > 0.0 else math.inf
        if ratio > best.ratio:
            best = BulbousBowReport(deep > (1.0 + margin) * waterline,
                                    float(grid.xs[ci]), deep, waterline, ratio)
    return best


# ---------------------------------------------------------------------------
# solve pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRecord:
    """One solved operating point of a sweep."""

    froude: float
    eps: float
    objective: float
    wave: float
    viscous: float
    xbar: float
    zbar: float
    hull: np.ndarray = field(repr=False)
    converged: bool
    iterations: int

    def __post_init__(self) -> None:
        if self.converged and not math.isclose(
                self.wave + self.viscous, self.objective,
                rel_tol=1e-12, abs_tol=1e-300 * max(1.0, abs(self.objective))):
            raise ValueError("resistance parts do not sum to the objective")


class HullStudy:
    """Shared assembly context for the experiments of one configuration."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        phys, gridcfg = config.physical, config.grid
        self.grid = build_grid(phys.length, phys.draft, gridcfg.nx, gridcfg.nz)
        self.drag = assemble_Md(self.grid)
        self._wave_cache: dict[float, WaveMatrix] = {}

    def flow(self, froude: float) -> FlowParams:
        phys = self.config.physical
        return FlowParams.from_froude(froude, phys.length, rho=phys.rho, g=phys.g,
                                      drag_coefficient=phys.drag_coefficient,
                                      volume=phys.volume)

    def wave_matrix(self, froude: float) -> WaveMatrix:
        key = round(float(froude), 12)
        if key not in self._wave_cache:
            quad = self.config.quadrature
            self._wave_cache[key] = assemble_Mw(
                self.grid, self.flow(froude).kelvin,
                n_per_octave=quad.n_per_octave, k_lambda_max=quad.k_lambda_max,
                tol=quad.tol)
        return self._wave_cache[key]

    def problem(self, froude: float, eps: float | None = None):
        phys = self.config.physical
        flow = self.flow(froude)
        if eps is None:
            eps = flow.eps
        return combine_objective(self.wave_matrix(froude), self.drag,
                                 phys.rho, phys.g, eps, phys.volume)

    def initial_hull(self) -> np.ndarray | None:
        solver = self.config.solver
        if solver.init == "flat":
            return None                  # solver default: uniform feasible hull
        if solver.init == "wigley":
            wig = wigley_hull(self.grid, self.config.physical.volume)
            return normalize_volume(self.grid, wig.values,
                                    self.config.physical.volume).values
        from .geometry import hull_from_csv
        return hull_from_csv(self.grid, solver.init_file).values

    def solve(self, froude: float, eps: float | None = None,
              f_init: np.ndarray | None = None,
              multiplier_init=None) -> SolveReport:
        solver = self.config.solver
        if f_init is None and multiplier_init is None:
            f_init = self.initial_hull()
        return uzawa_solve(self.problem(froude, eps),
                           dr1=solver.dr1, dr2=solver.dr2,
                           tol=solver.tol, max_iter=solver.max_iter,
                           f_init=f_init, multiplier_init=multiplier_init)

    def resistance_of(self, f: np.ndarray, froude: float,
                      eps: float | None = None) -> tuple[float, float, float]:
        """(total, wave, viscous) resistance of a fixed hull at a speed."""
        problem = self.problem(froude, eps)
        wave, visc = problem.parts(np.asarray(f, dtype=float))
        return wave + visc, wave, visc

    def record(self, froude: float, eps: float, report: SolveReport) -> SweepRecord:
        xbar, zbar = half_hull_centroid(self.grid, report.f)
        return SweepRecord(
            froude=froude, eps=eps, objective=report.objective,
            wave=report.wave_part, viscous=report.viscous_part,
            xbar=xbar, zbar=zbar, hull=report.f,
            converged=report.converged, iterations=report.iterations)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryLayerResult:
    records: tuple[SweepRecord, ...]
    widths: tuple[float, ...]       # xbar + L/2 per point
    exponent: float | None          # log-log slope of width vs eps
    exponent_stderr: float | None
    completed: bool


def boundary_layer_sweep(config: RunConfig, eps_list, froude: float = 1.0,
                         require_decades: float = 3.0) -> BoundaryLayerResult:
    """Solve at a fixed Froude number for decreasing eps; fit width ~ eps^p.

    The width is the distance from the left border to the center of mass of
    the half hull.  Solves are warm-started from the previous point; a
    non-converged point aborts the sweep with the completed prefix flagged.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise ValueError("need at least 4 eps points for the exponent fit")
    if any(not (e > 0.0) for e in eps_list):
        raise ValueError("eps values must be positive")
    span = math.log10(max(eps_list) / min(eps_list))
    if span < require_decades:
        raise ValueError(f"eps values must span >= {require_decades} decades, got {span:.2f}")
    order = np.argsort(eps_list)[::-1]          # solve from large eps down
    study = HullStudy(config)
    records: list[SweepRecord] = [None] * len(eps_list)
    f_prev = mult_prev = None
    for idx in order:
        eps = eps_list[idx]
        report = study.solve(froude, eps=eps, f_init=f_prev, multiplier_init=mult_prev)
        records[idx] = study.record(froude, eps, report)
        if not report.converged:
            done = tuple(r for r in records if r is not None)
            return BoundaryLayerResult(records=done, widths=tuple(
                r.xbar + config.physical.length / 2.0 for r in done),
                exponent=None, exponent_stderr=None, completed=False)
        f_prev = report.f
        mult_prev = (report.multiplier_bound, report.multiplier_volume)
    widths = tuple(r.xbar + config.physical.length / 2.0 for r in records)
    logs_e = np.log(np.asarray(eps_list))
    logs_w = np.log(np.asarray(widths))
    coeffs, cov = np.polyfit(logs_e, logs_w, 1, cov=True)
    return BoundaryLayerResult(records=tuple(records), widths=widths,
                               exponent=float(coeffs[0]),
                               exponent_stderr=float(math.sqrt(cov[0, 0])),
                               completed=True)


def froude_sweep(config: RunConfig, froude_list=None) -> list[SweepRecord]:
    """One converged solve per Froude number; failures are recorded, not raised."""
    if froude_list is None:
        froude_list = config.experiment.froude_list
    study = HullStudy(config)
    records = []
    for froude in froude_list:
        froude = float(froude)
        eps = study.flow(froude).eps
        try:
            report = study.solve(froude)
            records.append(study.record(froude, eps, report))
        except UzawaStepError:
            records.append(SweepRecord(
                froude=froude, eps=eps, objective=math.nan, wave=math.nan,
                viscous=math.nan, xbar=math.nan, zbar=math.nan,
                hull=np.zeros(study.grid.n_free), converged=False, iterations=0))
    return records


@dataclass(frozen=True)
class WigleyComparisonRow:
    froude: float
    r_optimized: float       # hull optimized at this Froude number
    r_design_hull: float     # hull optimized at fr_design, evaluated here
    r_wigley: float          # volume-normalized benchmark hull evaluated here


def wigley_compare(config: RunConfig, froude_list=None,
                   fr_design: float | None = None) -> list[WigleyComparisonRow]:
    """Resistance of per-speed optima, one fixed design optimum, and the benchmark."""
    if froude_list is None:
        froude_list = config.experiment.froude_list
    if fr_design is None:
        fr_design = config.experiment.fr_design
    study = HullStudy(config)
    design = study.solve(float(fr_design)).f
    wig = normalize_volume(study.grid, wigley_hull(study.grid, config.physical.volume).values,
                           config.physical.volume).values
    rows = []
    for froude in froude_list:
        froude = float(froude)
        opt = study.solve(froude)
        rows.append(WigleyComparisonRow(
            froude=froude,
            r_optimized=opt.objective,
            r_design_hull=study.resistance_of(design, froude)[0],
            r_wigley=study.resistance_of(wig, froude)[0]))
    return rows
