"""Discrete Michell wave-resistance quadratic form.

The wave resistance of a hull f on Omega is

    R = (4 rho g v^3 / pi) * int_1^Lambda Jt(lam)^2 lam^4 / sqrt(lam^2-1) dlam,
    Jt(lam) = iint f(x,z) exp(-lam^2 v z) cos(lam v x) dx dz,

with v = g/U^2 the Kelvin wave number (the antisymmetric sine contribution
vanishes for the symmetric optima and is dropped from the matrix form).  On
the Q1 basis the lam-integrand is a rank-one form J(lam)J(lam)^t whose
entries factor into closed-form 1D integrals; the singular lam-integral is
split at lam = 1 and approximated by midpoint rules on dyadically growing
octaves, which keeps every quadrature weight positive and hence the
assembled matrix positive semi-definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas

from .geometry import GridSpec

__all__ = [
    "LambdaQuadrature",
    "WaveMatrix",
    "a_plus",
    "a_minus",
    "b_plus",
    "b_minus",
    "j_vector",
    "build_quadrature",
    "assemble_Mw",
    "wave_resistance",
    "wave_resistance_direct",
    "SmoothBump",
    "null_space_residual",
    "write_quadrature_csv",
    "write_matrix_csv",
]

LN_2_PLUS_SQRT3 = math.log(2.0 + math.sqrt(3.0))  # int_1^2 dlam/sqrt(lam^2-1)

_SERIES_CUT = 0.5
_INV_FACT = [1.0 / math.factorial(k) for k in range(2, 15)]


# ---------------------------------------------------------------------------
# Stable kernel helpers.  Each has a removable cancellation at u -> 0 that
# would cost all significant digits if evaluated naively; below the cut the
# Taylor series is exact to ~1e-15 relative.
# ---------------------------------------------------------------------------

def _sin_minus_id(u):
    """sin(u) - u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _SERIES_CUT
    us = np.where(small, u, 0.0)
    u2 = us * us
    p = np.float64(0.0)
    for k in range(6, 0, -1):  # sum_{k>=1} (-1)^k u^{2k+1}/(2k+1)!
        p = ((-1.0) ** k / math.factorial(2 * k + 1)) + u2 * p
    series = us * u2 * p
    with np.errstate(invalid="ignore"):
        direct = np.sin(u) - u
    return np.where(small, series, direct)


def _one_minus_cos(u):
    """1 - cos(u), computed as 2 sin^2(u/2)."""
    s = np.sin(0.5 * np.asarray(u, dtype=float))
    return 2.0 * s * s


def _exp_decay_residual(u):
    """u - 1 + exp(-u)  (= the integral kernel of the upper half hat)."""
    u = np.asarray(u, dtype=float)
    small = u < _SERIES_CUT
    us = np.where(small, u, 0.0)
    p = np.float64(0.0)
    for k in range(14, 1, -1):  # sum_{k>=2} (-u)^k/k!
        p = _INV_FACT[k - 2] * (-1.0) ** k + us * p
    series = us * us * p
    return np.where(small, series, u + np.expm1(-np.where(small, 0.0, u)))


def _exp_growth_residual_small(u):
    """exp(u) - 1 - u for u < _SERIES_CUT only (series evaluation)."""
    u = np.asarray(u, dtype=float)
    p = np.float64(0.0)
    for k in range(14, 1, -1):  # sum_{k>=2} u^k/k!
        p = _INV_FACT[k - 2] + u * p
    return u * u * p


# ---------------------------------------------------------------------------
# Closed-form hat-function integrals.
#
#   a+_i = int_{x_i}^{x_i+dx}  cos(lam v x) ((x_i+dx) - x) dx
#   a-_i = int_{x_i-dx}^{x_i}  cos(lam v x) (x - (x_i-dx)) dx
#   b+_i = int_{z_i}^{z_i+dz}  exp(-lam^2 v z) ((z_i+dz) - z) dz
#   b-_i = int_{z_i-dz}^{z_i}  exp(-lam^2 v z) (z - (z_i-dz)) dz
#
# Direct integration gives, with w = lam v, s = lam^2 v, ux = w dx, uz = s dz:
#   a+- = [ +-(sin ux - ux) sin(w x_i) + (1 - cos ux) cos(w x_i) ] / w^2
#   b+  = exp(-s z_i) (uz - 1 + exp(-uz)) / s^2
#   b-  = exp(-s z_i) (exp(uz) - 1 - uz) / s^2          (b- = 0 when z_i = 0)
# ---------------------------------------------------------------------------

def a_plus(lam: float, v: float, x, dx: float):
    w = lam * v
    u = w * dx
    x = np.asarray(x, dtype=float)
    return (_sin_minus_id(u) * np.sin(w * x) + _one_minus_cos(u) * np.cos(w * x)) / (w * w)


def a_minus(lam: float, v: float, x, dx: float):
    w = lam * v
    u = w * dx
    x = np.asarray(x, dtype=float)
    return (-_sin_minus_id(u) * np.sin(w * x) + _one_minus_cos(u) * np.cos(w * x)) / (w * w)


def b_plus(lam: float, v: float, z, dz: float):
    s = lam * lam * v
    u = s * dz
    z = np.asarray(z, dtype=float)
    return np.exp(-s * z) * _exp_decay_residual(u) / (s * s)


def b_minus(lam: float, v: float, z, dz: float):
    """Lower half of the z-hat; identically zero on the waterline z = 0.

    For large u = lam^2 v dz the growth factor exp(u) is folded into the
    nodal exponential (z >= dz there), which avoids overflow.
    """
    s = lam * lam * v
    u = s * dz
    z = np.asarray(z, dtype=float)
    if u < _SERIES_CUT:
        out = np.exp(-s * z) * _exp_growth_residual_small(u) / (s * s)
    else:
        out = (np.exp(-s * np.maximum(z - dz, 0.0))
               * (1.0 - (1.0 + u) * np.exp(-u)) / (s * s))
    return np.where(z == 0.0, 0.0, out)


def j_vector(grid: GridSpec, v: float, lam: float) -> np.ndarray:
    """Per-node wave moments (J(lam))_i = (a+_i + a-_i)(b+_i + b-_i)/(dx dz)."""
    if not (lam >= 1.0):
        raise ValueError(f"lambda must be >= 1, got {lam}")
    if not (v > 0.0):
        raise ValueError(f"kelvin wave number must be positive, got {v}")
    w = lam * v
    s = lam * lam * v
    ux = w * grid.dx
    uz = s * grid.dz
    # a+ + a-: the odd sine parts cancel exactly.
    ax = 2.0 * _one_minus_cos(ux) * np.cos(w * grid.node_x) / (w * w)
    bz = np.exp(-s * grid.node_z) * _exp_decay_residual(uz)
    if uz < _SERIES_CUT:
        bm = np.exp(-s * grid.node_z) * _exp_growth_residual_small(uz)
    else:
        bm = (np.exp(-s * np.maximum(grid.node_z - grid.dz, 0.0))
              * (1.0 - (1.0 + uz) * np.exp(-uz)))
    bm = np.where(grid.is_surface, 0.0, bm)
    return ax * ((bz + bm) / (s * s)) / (grid.dx * grid.dz)


# ---------------------------------------------------------------------------
# lambda quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaQuadrature:
    """Nodes and positive weights for the truncated singular lambda-integral.

    Node 0 is lam = 1 with the singular-cell weight
    omega_0 = ln(2+sqrt(3)) - sum_i dlam_0/sqrt(lam_{i,0}^2 - 1) > 0
    (midpoint sums underestimate integrals of convex functions); all other
    nodes are octave midpoints with weight dlam_k lam^4/sqrt(lam^2-1).
    """

    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    octaves: np.ndarray = field(repr=False)   # octave index per node; -1 for lam = 1
    n_per_octave: int
    k_lambda: int

    def __post_init__(self) -> None:
        if self.nodes[0] != 1.0:
            raise ValueError("first quadrature node must be lambda = 1")
        if not np.all(np.diff(self.nodes) > 0.0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if not np.all(self.weights > 0.0):
            raise ValueError("quadrature weights must be positive")

    @property
    def lambda_max(self) -> float:
        return 2.0 ** self.k_lambda

    def octave_slice(self, k: int) -> slice:
        idx = np.nonzero(self.octaves == k)[0]
        if k == 0:
            # octave 0 owns the lam = 1 node, even in a single-node quadrature
            return slice(0, idx[-1] + 1 if idx.size else 1)
        return slice(idx[0], idx[-1] + 1)


def _octave_midpoints(k: int, n: int):
    start = 2.0 ** k
    dl = start / n
    lams = start + (np.arange(1, n + 1) - 0.5) * dl
    return lams, dl


def singular_cell_weight(n_per_octave: int) -> float:
    """omega_0 for the given midpoint count on [1, 2]."""
    lams, dl = _octave_midpoints(0, n_per_octave)
    return LN_2_PLUS_SQRT3 - float(np.sum(dl / np.sqrt(lams**2 - 1.0)))


def build_quadrature(n_per_octave: int, k_lambda: int) -> LambdaQuadrature:
    """Fixed quadrature with k_lambda octaves, Lambda = 2^k_lambda."""
    n_per_octave = int(n_per_octave)
    k_lambda = int(k_lambda)
    if n_per_octave < 1:
        raise ValueError(f"n_per_octave must be >= 1, got {n_per_octave}")
    if k_lambda < 1:
        raise ValueError(f"k_lambda must be >= 1, got {k_lambda}")
    nodes = [np.array([1.0])]
    weights = [np.array([singular_cell_weight(n_per_octave)])]
    octaves = [np.array([-1])]
    for k in range(k_lambda):
        lams, dl = _octave_midpoints(k, n_per_octave)
        nodes.append(lams)
        weights.append(dl * lams**4 / np.sqrt(lams**2 - 1.0))
        octaves.append(np.full(lams.shape, k, dtype=int))
    return LambdaQuadrature(
        nodes=np.concatenate(nodes), weights=np.concatenate(weights),
        octaves=np.concatenate(octaves), n_per_octave=n_per_octave, k_lambda=k_lambda)


# ---------------------------------------------------------------------------
# matrix assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveMatrix:
    """Dense symmetric PSD matrix of the geometric quadratic form.

    The physical prefactor 4 rho g v^3 / pi is NOT included; it is applied
    at evaluation time so one assembly serves rho/g changes at fixed v.
    """

    matrix: np.ndarray = field(repr=False)
    grid: GridSpec
    v: float
    quadrature: LambdaQuadrature

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def prefactor(rho: float, g: float, v: float) -> float:
    return 4.0 * rho * g * v**3 / math.pi


def _syrk_accumulate(acc: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """acc += cols @ cols.T on the upper triangle (exactly symmetric by use)."""
    return blas.dsyrk(1.0, np.asfortranarray(cols), beta=1.0, c=acc,
                      trans=0, lower=0, overwrite_c=1)


def assemble_Mw(grid: GridSpec, v: float, quadrature: LambdaQuadrature | None = None, *,
                n_per_octave: int = 80, k_lambda_max: int = 14,
                tol: float = 1e-12) -> WaveMatrix:
    """Assemble M_w = omega_0 J(1)J(1)^t + sum_j omega_j J(lam_j)J(lam_j)^t.

    With an explicit quadrature the sum is taken over exactly its nodes.
    Otherwise octaves are added (in ascending lambda order) until the
    weighted moment energy contributed by the last octave falls below `tol`
    of the accumulated total, capped at `k_lambda_max` octaves.

    The rank-one sum is accumulated per octave with a symmetric rank-k BLAS
    update, so the result is exactly symmetric and deterministic.
    """
    n = grid.n_free
    if quadrature is not None:
        full = quadrature
        k_max = quadrature.k_lambda
        adaptive = False
    else:
        full = build_quadrature(n_per_octave, k_lambda_max)
        k_max = k_lambda_max
        adaptive = True

    try:
        acc = np.zeros((n, n), order="F")
    except MemoryError as exc:
        raise MemoryError(
            f"cannot allocate the dense {n}x{n} wave matrix; use a smaller grid") from exc

    total = 0.0
    k_used = 0
    for k in range(k_max):
        sl = full.octave_slice(k)
        lams = full.nodes[sl]
        wts = full.weights[sl]
        cols = np.empty((n, lams.size), order="F")
        for c in range(lams.size):
            cols[:, c] = j_vector(grid, v, lams[c])
        cols *= np.sqrt(wts)[np.newaxis, :]
        acc = _syrk_accumulate(acc, cols)
        contribution = float(np.sum(cols * cols))  # sum_j w_j ||J_j||^2
        total += contribution
        k_used = k + 1
        if adaptive and total > 0.0 and contribution < tol * total:
            break

    matrix = np.triu(acc) + np.triu(acc, 1).T
    if adaptive and k_used < k_max:
        used = build_quadrature(n_per_octave, k_used)
    else:
        used = full
    return WaveMatrix(matrix=matrix, grid=grid, v=float(v), quadrature=used)


def wave_resistance(f, wave_matrix: WaveMatrix, rho: float, g: float,
                    v: float | None = None) -> float:
    """R = (4 rho g v^3 / pi) F^t M_w F  (in Newton), clamped at zero."""
    values = f.values if hasattr(f, "values") else np.asarray(f, dtype=float)
    if values.shape != (wave_matrix.n,):
        raise ValueError(
            f"expected {wave_matrix.n} nodal values, got shape {values.shape}")
    if v is None:
        v = wave_matrix.v
    elif not math.isclose(v, wave_matrix.v, rel_tol=1e-12):
        raise ValueError(
            f"wave matrix was assembled for v={wave_matrix.v}, got v={v}")
    quad_form = float(values @ (wave_matrix.matrix @ values))
    return max(prefactor(rho, g, v) * quad_form, 0.0)


# ---------------------------------------------------------------------------
# Independent direct-quadrature evaluation (test oracle; no closed forms).
# ---------------------------------------------------------------------------

def _panel_points(edges: np.ndarray, order: int):
    gx, gw = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    return pts, wts


def _z_panel_edges(grid: GridSpec, s: float) -> np.ndarray:
    """Cell edges in z, geometrically refined near z = 0 at the decay scale 1/s."""
    edges = set(float(z) for z in grid.zs)
    if s * grid.dz > 2.0:
        t = grid.dz
        while t > 0.25 / s and t > 1e-300:
            t *= 0.5
            edges.add(t)
    return np.array(sorted(edges))


def wave_resistance_direct(hull_fn, grid: GridSpec, v: float, rho: float, g: float,
                           quadrature: LambdaQuadrature, order: int = 12,
                           include_antisymmetric: bool = False) -> float:
    """Wave resistance by dense panel Gauss quadrature of the hull moments.

    `hull_fn(x, z)` must broadcast; the lambda-sum uses the same quadrature
    as the matrix path, so a comparison isolates the closed-form/assembly
    machinery.  With `include_antisymmetric` the sine moment is added, which
    is the full thin-ship form used in symmetry experiments.
    """
    acc = 0.0
    for lam, wgt in zip(quadrature.nodes, quadrature.weights):
        w = lam * v
        s = lam * lam * v
        xsub = max(1, int(math.ceil(w * grid.dx / 1.5)))
        x_edges = np.linspace(-grid.length / 2, grid.length / 2, grid.nx * xsub + 1)
        xp, xw = _panel_points(x_edges, order)
        zp, zw = _panel_points(_z_panel_edges(grid, s), order)
        fvals = hull_fn(xp[:, None], zp[None, :])
        zkern = np.exp(-s * zp) * zw
        jt = float((np.cos(w * xp) * xw) @ fvals @ zkern)
        acc += wgt * jt * jt
        if include_antisymmetric:
            it = float((np.sin(w * xp) * xw) @ fvals @ zkern)
            acc += wgt * it * it
    return prefactor(rho, g, v) * acc


# ---------------------------------------------------------------------------
# Discrete null direction of the continuous moment operator.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothBump:
    """Separable sine-power bump supported on [x0, x1] x [z0, z1].

    h(x,z) = sin^p(pi (x-x0)/(x1-x0)) sin^p(pi (z-z0)/(z1-z0)); p >= 3 keeps
    the second derivatives continuous across the support boundary.
    """

    x0: float
    x1: float
    z0: float
    z1: float
    power: int = 4

    def __post_init__(self) -> None:
        if not (self.x1 > self.x0 and self.z1 > self.z0):
            raise ValueError("bump support must have positive extent")
        if self.power < 3:
            raise ValueError("power must be >= 3 for two continuous derivatives")

    def _local(self, x, z):
        sx = math.pi / (self.x1 - self.x0)
        sz = math.pi / (self.z1 - self.z0)
        return sx, sz, sx * (np.asarray(x) - self.x0), sz * (np.asarray(z) - self.z0)

    def _inside(self, x, z):
        return ((np.asarray(x) > self.x0) & (np.asarray(x) < self.x1)
                & (np.asarray(z) > self.z0) & (np.asarray(z) < self.z1))

    def value(self, x, z):
        _, _, tx, tz = self._local(x, z)
        return np.where(self._inside(x, z), np.sin(tx)**self.power * np.sin(tz)**self.power, 0.0)

    def d2_dx2(self, x, z):
        p = self.power
        sx, _, tx, tz = self._local(x, z)
        sin_x, cos_x = np.sin(tx), np.cos(tx)
        core = p * sx**2 * sin_x**(p - 2) * ((p - 1) * cos_x**2 - sin_x**2)
        return np.where(self._inside(x, z), core * np.sin(tz)**p, 0.0)

    def d_dz(self, x, z):
        p = self.power
        _, sz, tx, tz = self._local(x, z)
        core = p * sz * np.sin(tz)**(p - 1) * np.cos(tz)
        return np.where(self._inside(x, z), np.sin(tx)**p * core, 0.0)


def null_space_residual(grid: GridSpec, v: float, bump: SmoothBump,
                        quadrature: LambdaQuadrature | None = None) -> float:
    """Normalized resistance of the sampled null direction f = h_xx + v h_z.

    The continuous f has identically vanishing wave moments, so the residual
    measures only the Q1 sampling error; it decreases under grid refinement.
    Returned value is (sum_j w_j (J_j . F)^2) / (dx dz |F|^2).
    """
    margin_x = 1e-12 * grid.length
    margin_z = 1e-12 * grid.draft
    if (bump.x0 <= -grid.length / 2 + margin_x or bump.x1 >= grid.length / 2 - margin_x
            or bump.z0 <= margin_z or bump.z1 >= grid.draft - margin_z):
        raise ValueError("bump support must be strictly inside the domain")
    if quadrature is None:
        quadrature = build_quadrature(80, 10)
    f = bump.d2_dx2(grid.node_x, grid.node_z) + v * bump.d_dz(grid.node_x, grid.node_z)
    norm2 = float(f @ f)
    if norm2 == 0.0:
        return 0.0
    acc = 0.0
    for lam, wgt in zip(quadrature.nodes, quadrature.weights):
        proj = float(j_vector(grid, v, lam) @ f)
        acc += wgt * proj * proj
    return acc / (grid.dx * grid.dz * norm2)


# ---------------------------------------------------------------------------
# debug exports
# ---------------------------------------------------------------------------

def write_quadrature_csv(path, quadrature: LambdaQuadrature) -> None:
    lines = ["lambda,weight"]
    for lam, wgt in zip(quadrature.nodes, quadrature.weights):
        lines.append(f"{format(lam, '.17g')},{format(wgt, '.17g')}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_matrix_csv(path, matrix: np.ndarray, max_size: int = 500) -> None:
    matrix = np.asarray(matrix)
    if matrix.shape[0] > max_size:
        raise ValueError(
            f"refusing to export a {matrix.shape[0]}x{matrix.shape[1]} dense matrix as CSV")
    lines = [",".join(format(x, ".17g") for x in row) for row in matrix]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
