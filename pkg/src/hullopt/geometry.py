"""Computational domain, Q1 hull representation and volume functional.

The hull half-breadth is a nonnegative function y = f(x, z) on the rectangle
Omega = (-L/2, L/2) x (0, T_draft), with x the longitudinal coordinate
(midship at x = 0) and z the depth below the waterline.  f vanishes on
x = +-L/2 and on the bottom z = T_draft; the waterline z = 0 is free.
f is represented by bilinear (Q1) hat functions on a uniform cartesian grid;
the free degrees of freedom are the interior nodes followed by the waterline
nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "FlowParams",
    "HullCoefficients",
    "build_grid",
    "eval_hull",
    "hull_volume",
    "wigley_hull",
    "normalize_volume",
    "full_lattice",
    "write_hull_csv",
    "read_hull_csv",
]

# Post-solve feasibility tolerances (relative).
NEGATIVITY_RTOL = 1e-10
VOLUME_RTOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """Uniform cartesian grid on Omega with Q1 free-node bookkeeping.

    Free nodes are the (nx-1)*(nz-1) interior nodes, ordered row-major
    (z outer ascending, x inner ascending), followed by the nx-1 waterline
    nodes (z = 0) by increasing x.  Nodes on x = +-L/2 and z = T_draft carry
    no degree of freedom.
    """

    length: float
    draft: float
    nx: int
    nz: int
    dx: float
    dz: float
    xs: np.ndarray          # (nx+1,) lattice x coordinates, exactly mirror symmetric
    zs: np.ndarray          # (nz+1,) lattice z coordinates
    node_i: np.ndarray      # (n_free,) lattice column of each free node
    node_j: np.ndarray      # (n_free,) lattice row of each free node
    node_x: np.ndarray      # (n_free,)
    node_z: np.ndarray      # (n_free,)
    alpha: np.ndarray       # (n_free,) volume weights: 1 interior, 1/2 waterline
    mirror_index: np.ndarray  # (n_free,) index of the x-mirrored node
    lattice_index: np.ndarray  # (nz+1, nx+1) free-node index or -1

    @property
    def n_interior(self) -> int:
        return (self.nx - 1) * (self.nz - 1)

    @property
    def n_free(self) -> int:
        return self.n_interior + self.nx - 1

    @property
    def is_surface(self) -> np.ndarray:
        return np.arange(self.n_free) >= self.n_interior

    @property
    def cell_area(self) -> float:
        return self.dx * self.dz


def build_grid(length: float, draft: float, nx: int, nz: int) -> GridSpec:
    """Build the uniform grid with canonical free-node ordering.

    x coordinates are constructed pairwise so that xs[nx-i] == -xs[i]
    exactly; this keeps every downstream quantity bit-symmetric under the
    x-mirror map.
    """
    if not (length > 0.0) or not (draft > 0.0):
        raise ValueError(f"domain dimensions must be positive, got length={length}, draft={draft}")
    nx, nz = int(nx), int(nz)
    if nx < 2 or nz < 2:
        raise ValueError(f"need at least 2 cells per direction, got nx={nx}, nz={nz}")

    dx = length / nx
    dz = draft / nz
    xs = np.empty(nx + 1)
    for i in range(nx // 2 + 1):
        xs[i] = i * dx - length / 2.0
        xs[nx - i] = -xs[i]
    zs = np.arange(nz + 1, dtype=float) * dz

    ii, jj = np.meshgrid(np.arange(1, nx), np.arange(1, nz), indexing="xy")
    node_i = np.concatenate([ii.ravel(), np.arange(1, nx)])
    node_j = np.concatenate([jj.ravel(), np.zeros(nx - 1, dtype=int)])

    n_int = (nx - 1) * (nz - 1)
    n = n_int + nx - 1
    alpha = np.where(np.arange(n) < n_int, 1.0, 0.5)

    lattice = -np.ones((nz + 1, nx + 1), dtype=int)
    lattice[node_j, node_i] = np.arange(n)
    mirror = lattice[node_j, nx - node_i]

    return GridSpec(
        length=float(length), draft=float(draft), nx=nx, nz=nz, dx=dx, dz=dz,
        xs=xs, zs=zs, node_i=node_i, node_j=node_j,
        node_x=xs[node_i], node_z=zs[node_j], alpha=alpha,
        mirror_index=mirror, lattice_index=lattice,
    )


@dataclass(frozen=True)
class FlowParams:
    """Physical constants and the derived flow numbers for one speed."""

    rho: float                 # fluid density (kg/m^3)
    g: float                   # gravity (m/s^2)
    speed: float               # ship speed U (m/s)
    length: float              # hull length L (m), reference for the Froude number
    froude: float              # U / sqrt(g L)
    kelvin: float              # v = g / U^2 (1/m)
    drag_coefficient: float    # constant viscous drag coefficient
    eps: float                 # 0.5 rho C_d U^2 (Pa), weight of the gradient-energy term
    volume: float              # target half-volume (m^3)

    def __post_init__(self) -> None:
        for name in ("rho", "g", "speed", "length", "volume"):
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.drag_coefficient < 0.0:
            raise ValueError(f"drag_coefficient must be nonnegative, got {self.drag_coefficient}")
        # Fr, U and v must be mutually consistent: v = 1/(Fr^2 L).
        if not math.isclose(self.kelvin * self.froude**2 * self.length, 1.0, rel_tol=1e-12):
            raise ValueError("inconsistent speed parameters: kelvin != 1/(froude^2 * length)")

    @classmethod
    def from_speed(cls, speed: float, length: float, *, rho: float = 1000.0, g: float = 9.81,
                   drag_coefficient: float = 1e-2, volume: float = 0.03) -> "FlowParams":
        if not (speed > 0.0):
            raise ValueError(f"speed must be positive, got {speed}")
        froude = speed / math.sqrt(g * length)
        kelvin = 1.0 / (froude * froude * length)
        eps = 0.5 * rho * drag_coefficient * speed * speed
        return cls(rho=rho, g=g, speed=speed, length=length, froude=froude,
                   kelvin=kelvin, drag_coefficient=drag_coefficient, eps=eps, volume=volume)

    @classmethod
    def from_froude(cls, froude: float, length: float, *, rho: float = 1000.0, g: float = 9.81,
                    drag_coefficient: float = 1e-2, volume: float = 0.03) -> "FlowParams":
        if not (froude > 0.0):
            raise ValueError(f"froude must be positive, got {froude}")
        speed = froude * math.sqrt(g * length)
        return cls.from_speed(speed, length, rho=rho, g=g,
                              drag_coefficient=drag_coefficient, volume=volume)


@dataclass(frozen=True)
class HullCoefficients:
    """Vector of free-node hull offsets tied to its grid."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_free,):
            raise ValueError(
                f"expected {self.grid.n_free} nodal values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    def volume(self) -> float:
        return hull_volume(self.grid, self.values)

    def mirrored(self) -> "HullCoefficients":
        return HullCoefficients(self.grid, self.values[self.grid.mirror_index])

    def check_feasible(self, volume: float) -> None:
        """Post-solve feasibility: nonnegativity and volume within tolerance."""
        fmax = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        if float(self.values.min(initial=0.0)) < -NEGATIVITY_RTOL * fmax:
            raise ValueError("hull has negative offsets beyond tolerance")
        if abs(self.volume() - volume) > VOLUME_RTOL * volume:
            raise ValueError(
                f"hull volume {self.volume():.12g} misses target {volume:.12g}")


def _coefficients(f) -> np.ndarray:
    return f.values if isinstance(f, HullCoefficients) else np.asarray(f, dtype=float)


def full_lattice(grid: GridSpec, f) -> np.ndarray:
    """(nz+1, nx+1) array of nodal values with zeros on the constrained sides."""
    values = _coefficients(f)
    if values.shape != (grid.n_free,):
        raise ValueError(f"expected {grid.n_free} nodal values, got shape {values.shape}")
    lat = np.zeros((grid.nz + 1, grid.nx + 1))
    lat[grid.node_j, grid.node_i] = values
    return lat


def eval_hull(grid: GridSpec, f, x, z):
    """Evaluate the Q1 interpolant at points of the closed domain.

    Broadcasts over x and z.  Points outside the closure of Omega raise.
    """
    lat = full_lattice(grid, f)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    tol_x = 1e-12 * grid.length
    tol_z = 1e-12 * grid.draft
    if np.any(x < -grid.length / 2 - tol_x) or np.any(x > grid.length / 2 + tol_x):
        raise ValueError("x outside [-L/2, L/2]")
    if np.any(z < -tol_z) or np.any(z > grid.draft + tol_z):
        raise ValueError("z outside [0, T_draft]")
    ix = np.clip(((x + grid.length / 2) / grid.dx).astype(int), 0, grid.nx - 1)
    iz = np.clip((z / grid.dz).astype(int), 0, grid.nz - 1)
    tx = np.clip((x - grid.xs[ix]) / grid.dx, 0.0, 1.0)
    tz = np.clip((z - grid.zs[iz]) / grid.dz, 0.0, 1.0)
    return ((1 - tx) * (1 - tz) * lat[iz, ix] + tx * (1 - tz) * lat[iz, ix + 1]
            + (1 - tx) * tz * lat[iz + 1, ix] + tx * tz * lat[iz + 1, ix + 1])


def hull_volume(grid: GridSpec, f) -> float:
    """Exact volume of the Q1 interpolant: dx*dz*(sum_int f + 1/2 sum_surf f).

    Summed with math.fsum, so the result is independent of node ordering
    (the x-mirror map preserves it exactly).
    """
    values = _coefficients(f)
    if values.shape != (grid.n_free,):
        raise ValueError(f"expected {grid.n_free} nodal values, got shape {values.shape}")
    return grid.dx * grid.dz * math.fsum(grid.alpha * values)


def wigley_hull(grid: GridSpec, volume: float) -> HullCoefficients:
    """Nodal samples of the parabolic-section benchmark hull.

    f(x,z) = B/2 (1 - 4x^2/L^2)(1 - z^2/T^2) with B chosen so the continuous
    surface has the requested volume: V = (2/9) B L T.  The discrete nodal
    volume differs from V by O(dx^2 + dz^2).
    """
    if not (volume > 0.0):
        raise ValueError(f"volume must be positive, got {volume}")
    beam = 9.0 * volume / (2.0 * grid.length * grid.draft)
    vals = (beam / 2.0
            * (1.0 - 4.0 * grid.node_x**2 / grid.length**2)
            * (1.0 - grid.node_z**2 / grid.draft**2))
    return HullCoefficients(grid, vals)


def normalize_volume(grid: GridSpec, f, volume: float) -> HullCoefficients:
    """Rescale a nonnegative hull so its discrete volume equals `volume`."""
    values = _coefficients(f)
    if float(values.min(initial=0.0)) < 0.0:
        raise ValueError("cannot normalize a hull with negative offsets")
    current = hull_volume(grid, values)
    if not (current > 0.0):
        raise ValueError(f"hull volume must be positive to rescale, got {current}")
    return HullCoefficients(grid, values * (volume / current))


# ---------------------------------------------------------------------------
# CSV serialization: header `x,z,f`, one row per lattice node (boundary nodes
# carry f = 0), row-major (z outer ascending, x inner ascending), floats with
# 17 significant digits.
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_hull_csv(path, grid: GridSpec, f) -> None:
    lat = full_lattice(grid, f)
    lines = ["x,z,f"]
    for j in range(grid.nz + 1):
        zj = grid.zs[j]
        for i in range(grid.nx + 1):
            lines.append(f"{_fmt(grid.xs[i])},{_fmt(zj)},{_fmt(lat[j, i])}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_hull_csv(path):
    """Read a hull CSV back as (x, z, f) column arrays."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "x,z,f":
            raise ValueError(f"unexpected hull CSV header: {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]


def hull_from_csv(grid: GridSpec, path) -> HullCoefficients:
    """Reconstruct free-node coefficients from a hull CSV written for `grid`."""
    x, z, f = read_hull_csv(path)
    n_lat = (grid.nx + 1) * (grid.nz + 1)
    if x.size != n_lat:
        raise ValueError(f"hull CSV has {x.size} rows, grid expects {n_lat}")
    lat = f.reshape(grid.nz + 1, grid.nx + 1)
    xs = x.reshape(grid.nz + 1, grid.nx + 1)[0]
    zs = z.reshape(grid.nz + 1, grid.nx + 1)[:, 0]
    if not (np.array_equal(xs, grid.xs) and np.array_equal(zs, grid.zs)):
        raise ValueError("hull CSV coordinates do not match the grid")
    return HullCoefficients(grid, lat[grid.node_j, grid.node_i])
