"""Constrained quadratic program for the total-resistance minimizer.

Solves   min F^t Q F   over  { F >= 0,  sum_i alpha_i f_i = Vt }
with Q = (4 rho g v^3 / pi) M_w + eps M_d, via the Uzawa saddle-point
iteration on the Lagrangian

    L(F, l1, l2) = F^t Q F + l1^t F + (alpha^t F - Vt) l2,
    l1 in (R_-)^N  (multiplier of F >= 0),  l2 in R  (volume multiplier).

Stationarity gives the primal step F = -1/2 Q^{-1} (l1 + l2 alpha); the dual
steps ascend the multipliers, projecting l1 back onto the nonpositive cone.
A slow independent projected-gradient solver over the same feasible set is
provided for cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .viscous import DragMatrix
from .wave import WaveMatrix, prefactor

__all__ = [
    "QpProblem",
    "SolveReport",
    "KktResiduals",
    "UzawaStepError",
    "combine_objective",
    "estimate_uzawa_steps",
    "uzawa_solve",
    "kkt_residuals",
    "project_volume_simplex",
    "reference_qp_oracle",
]


class UzawaStepError(RuntimeError):
    """Raised when the dual residuals stop decreasing (step sizes too large)."""

    def __init__(self, message: str, residual_history: np.ndarray):
        super().__init__(message)
        self.residual_history = residual_history


@dataclass(frozen=True)
class ObjectiveSplit:
    """References to the two terms of Q, for reporting the resistance parts."""

    wave_prefactor: float
    wave_matrix: WaveMatrix
    eps: float
    drag_matrix: DragMatrix


@dataclass(frozen=True)
class QpProblem:
    """Combined objective F^t Q F with volume weights and target nodal sum."""

    Q: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    vtilde: float
    split: ObjectiveSplit | None = None

    def __post_init__(self) -> None:
        n = self.Q.shape[0]
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be square, got shape {self.Q.shape}")
        if self.alpha.shape != (n,):
            raise ValueError(f"alpha must have length {n}, got {self.alpha.shape}")
        if self.vtilde < 0.0:
            raise ValueError(f"target nodal volume must be nonnegative, got {self.vtilde}")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def objective(self, f: np.ndarray) -> float:
        return float(f @ (self.Q @ f))

    def parts(self, f: np.ndarray) -> tuple[float, float]:
        """(wave, viscous) resistance parts of the objective at f."""
        if self.split is None:
            raise ValueError("QpProblem was built without its objective split")
        wave = self.split.wave_prefactor * float(f @ (self.split.wave_matrix.matrix @ f))
        visc = self.split.eps * float(f @ (self.split.drag_matrix.matrix @ f))
        return wave, visc


def combine_objective(wave_matrix: WaveMatrix, drag_matrix: DragMatrix,
                      rho: float, g: float, eps: float, volume: float,
                      v: float | None = None) -> QpProblem:
    """Q = (4 rho g v^3/pi) M_w + eps M_d, with Vt = V/(dx dz)."""
    if wave_matrix.n != drag_matrix.n:
        raise ValueError(
            f"matrix sizes disagree: wave {wave_matrix.n}, drag {drag_matrix.n}")
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps}")
    if v is None:
        v = wave_matrix.v
    elif not math.isclose(v, wave_matrix.v, rel_tol=1e-12):
        raise ValueError(f"wave matrix was assembled for v={wave_matrix.v}, got v={v}")
    grid = wave_matrix.grid
    pref = prefactor(rho, g, v)
    Q = pref * wave_matrix.matrix + eps * drag_matrix.toarray()
    split = ObjectiveSplit(wave_prefactor=pref, wave_matrix=wave_matrix,
                           eps=eps, drag_matrix=drag_matrix)
    return QpProblem(Q=Q, alpha=grid.alpha, vtilde=volume / grid.cell_area, split=split)


@dataclass(frozen=True)
class KktResiduals:
    """Raw optimality residuals of (F, l1, l2)."""

    stationarity: float      # ||2QF + l1 + l2 alpha||_inf
    volume: float            # |alpha^t F - Vt|
    negativity: float        # max_i |min(f_i, 0)|
    complementarity: float   # max_i |l1_i f_i|


def kkt_residuals(problem: QpProblem, f: np.ndarray, lam1: np.ndarray,
                  lam2: float) -> KktResiduals:
    f = np.asarray(f, dtype=float)
    lam1 = np.asarray(lam1, dtype=float)
    if f.shape != (problem.n,) or lam1.shape != (problem.n,):
        raise ValueError("dimension mismatch in KKT residual evaluation")
    stat = float(np.max(np.abs(2.0 * (problem.Q @ f) + lam1 + lam2 * problem.alpha)))
    vol = abs(float(problem.alpha @ f) - problem.vtilde)
    neg = float(np.max(np.abs(np.minimum(f, 0.0)), initial=0.0))
    comp = float(np.max(np.abs(lam1 * f), initial=0.0))
    return KktResiduals(stat, vol, neg, comp)


def _scaled_residuals(problem: QpProblem, raw: KktResiduals, f: np.ndarray,
                      lam1: np.ndarray, lam2: float) -> dict[str, float]:
    """Residuals normalized by their natural scales (dimensionless)."""
    mult_scale = max(float(np.max(np.abs(lam1), initial=0.0)), abs(lam2), 1e-300)
    f_scale = max(float(np.max(np.abs(f), initial=0.0)), 1e-300)
    vt_scale = max(problem.vtilde, 1e-300)
    return {
        "stationarity": raw.stationarity / mult_scale,
        "feasibility": max(raw.volume / vt_scale, raw.negativity / f_scale),
        "complementarity": raw.complementarity / max(mult_scale * f_scale, 1e-300),
    }


@dataclass
class SolveReport:
    """Outcome of one constrained solve."""

    f: np.ndarray = field(repr=False)
    converged: bool
    iterations: int
    objective: float
    wave_part: float | None
    viscous_part: float | None
    multiplier_bound: np.ndarray = field(repr=False)
    multiplier_volume: float
    kkt: KktResiduals
    residuals: dict[str, float]          # scaled stationarity/feasibility/complementarity
    steps: tuple[float, float]
    residual_history: np.ndarray = field(repr=False)


def _factorize(Q: np.ndarray):
    try:
        return cho_factor(Q, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise ValueError("objective matrix is not positive definite") from exc


def estimate_uzawa_steps(problem: QpProblem, chol=None, safety_bound: float = 2.8,
                         safety_volume: float = 1.0,
                         iterations: int = 40) -> tuple[float, float]:
    """Default dual steps from the spectrum of Q^{-1}.

    dr1 = safety_bound / ||Q^{-1}||   (power iteration on Q^{-1}),
    dr2 = safety_volume / (alpha^t Q^{-1} alpha).
    The dual iteration matrix is bounded by
    (dr1 ||Q^{-1}|| + dr2 alpha^t Q^{-1} alpha)/2 < 2, i.e. the safeties may
    sum to at most 4; the uneven split favors the bound multipliers, whose
    modes are the slowest when Q is stiff.  The power iteration starts from
    a fixed-seed random vector so its overlap with the bottom eigenvectors
    of Q cannot degenerate; a residual underestimate of ||Q^{-1}|| is
    absorbed by the retry logic of `uzawa_solve`.
    """
    if chol is None:
        chol = _factorize(problem.Q)
    n = problem.n
    y = np.random.default_rng(1905).standard_normal(n)
    y /= float(np.linalg.norm(y))
    norm = 1.0
    for _ in range(iterations):
        y = cho_solve(chol, y, check_finite=False)
        norm = float(np.linalg.norm(y))
        y /= norm
    inv_norm = norm                      # ~ ||Q^{-1}||_2
    a_qinv_a = float(problem.alpha @ cho_solve(chol, problem.alpha, check_finite=False))
    return safety_bound / inv_norm, safety_volume / a_qinv_a


def _initial_multipliers(problem: QpProblem, f_init: np.ndarray):
    """Dual warm start consistent with a primal guess (least-squares fit)."""
    grad = 2.0 * (problem.Q @ f_init)
    lam2 = -float(problem.alpha @ grad) / float(problem.alpha @ problem.alpha)
    lam1 = np.minimum(0.0, -(grad + lam2 * problem.alpha))
    return lam1, lam2


def _uzawa_iterate(problem: QpProblem, chol, dr1: float, dr2: float, tol: float,
                  max_iter: int, lam1_0: np.ndarray, lam2_0: float,
                  guard_window: int, guard_factor: float):
    alpha = problem.alpha
    vtilde = problem.vtilde
    f_scale_floor = max(vtilde / max(float(alpha.sum()), 1.0), 1e-300)
    feas_scale = vtilde if vtilde > 0.0 else 1.0
    lam1, lam2 = lam1_0.copy(), lam2_0
    f = None
    history = np.empty(max_iter)
    best = math.inf
    best_at = 0

    # divergent trial steps may overflow before the non-finite guard fires
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(max_iter):
            f_new = -0.5 * cho_solve(chol, lam1 + lam2 * alpha, check_finite=False)
            violation = float(alpha @ f_new) - vtilde
            lam1_new = np.minimum(lam1 + dr1 * f_new, 0.0)
            lam2_new = lam2 + dr2 * violation

            f_scale = max(float(np.max(np.abs(f_new), initial=0.0)), f_scale_floor)
            mult_scale = max(float(np.max(np.abs(lam1_new), initial=0.0)),
                             abs(lam2_new), 1e-300)
            upd_f = (float(np.max(np.abs(f_new - f))) / f_scale) if f is not None else 1.0
            upd_mult = max(float(np.max(np.abs(lam1_new - lam1))),
                           abs(lam2_new - lam2)) / mult_scale
            feas = abs(violation) / feas_scale
            neg = -float(f_new.min(initial=0.0)) / f_scale
            comp = (float(np.max(np.abs(lam1_new * f_new), initial=0.0))
                    / max(mult_scale * f_scale, 1e-300))
            residual = max(upd_f, upd_mult, feas, 10.0 * max(neg, 0.0), comp)
            history[it] = residual

            f, lam1, lam2 = f_new, lam1_new, lam2_new

            if not math.isfinite(residual):
                raise UzawaStepError(
                    f"dual iteration produced a non-finite residual at iteration {it + 1}; "
                    f"reduce the steps (dr1={dr1:.3g}, dr2={dr2:.3g})", history[:it + 1])
            if residual < best:
                best, best_at = residual, it
            elif (it - best_at > 10 * guard_window and it >= 2 * guard_window
                    and float(np.min(history[it - guard_window:it + 1])) > guard_factor * best):
                raise UzawaStepError(
                    f"residual stopped decreasing after iteration {best_at + 1} "
                    f"(best {best:.3g}); reduce the steps (dr1={dr1:.3g}, dr2={dr2:.3g})",
                    history[:it + 1])
            if residual < tol:
                return f, lam1, lam2, it + 1, True, history[:it + 1].copy()
    return f, lam1, lam2, max_iter, False, history.copy()


def uzawa_solve(problem: QpProblem, dr1: float | None = None, dr2: float | None = None,
                tol: float = 1e-8, max_iter: int = 200_000,
                f_init: np.ndarray | None = None,
                multiplier_init: tuple[np.ndarray, float] | None = None,
                guard_window: int = 500, guard_factor: float = 10.0) -> SolveReport:
    """Uzawa iteration on the saddle point of the volume-constrained QP.

    Per iteration:
        F      <- -1/2 Q^{-1} (l1 + l2 alpha)          (exact primal step)
        l1     <- min(l1 + dr1 F, 0)                   (projection on (R_-)^N)
        l2     <- l2 + dr2 (alpha^t F - Vt)

    Terminates when the scaled update norms and KKT residuals drop below
    `tol` (negativity is held one order tighter so that the final clip to
    the nonnegative cone is harmless).  Hitting `max_iter` returns a
    non-converged report with the residual trace.  A residual history that
    stops decreasing raises UzawaStepError when the steps were given
    explicitly; estimated steps are shrunk and retried first, since the
    power-iteration bound on ||Q^{-1}|| can be an underestimate.
    """
    if not (tol > 0.0):
        raise ValueError(f"tol must be positive, got {tol}")
    chol = _factorize(problem.Q)
    auto_steps = dr1 is None and dr2 is None
    if dr1 is None or dr2 is None:
        est1, est2 = estimate_uzawa_steps(problem, chol)
        dr1 = est1 if dr1 is None else dr1
        dr2 = est2 if dr2 is None else dr2
    if not (dr1 > 0.0 and dr2 > 0.0):
        raise ValueError(f"steps must be positive, got dr1={dr1}, dr2={dr2}")

    alpha = problem.alpha
    if multiplier_init is not None:
        lam1_0 = np.asarray(multiplier_init[0], dtype=float)
        lam2_0 = float(multiplier_init[1])
        if lam1_0.shape != (problem.n,):
            raise ValueError("multiplier_init has wrong length")
        lam1_0 = np.minimum(lam1_0, 0.0)
    else:
        if f_init is None:
            f_init = np.full(problem.n, problem.vtilde / float(alpha.sum()))
        else:
            f_init = np.asarray(f_init, dtype=float)
            if f_init.shape != (problem.n,):
                raise ValueError("f_init has wrong length")
        lam1_0, lam2_0 = _initial_multipliers(problem, f_init)

    attempts = 4 if auto_steps else 1
    for attempt in range(attempts):
        try:
            f, lam1, lam2, iterations, converged, history = _uzawa_iterate(
                problem, chol, dr1, dr2, tol, max_iter, lam1_0, lam2_0,
                guard_window, guard_factor)
            break
        except UzawaStepError:
            if attempt == attempts - 1:
                raise
            dr1 *= 0.125
            dr2 *= 0.125

    # Feasibility polish: the exact minimizer is nonnegative; the in-loop
    # criterion keeps any residual negativity below tol/10 relative, so
    # clipping perturbs the volume well inside its tolerance.
    f = np.maximum(f, 0.0)
    raw = kkt_residuals(problem, f, lam1, lam2)
    scaled = _scaled_residuals(problem, raw, f, lam1, lam2)
    objective = problem.objective(f)
    wave_part = visc_part = None
    if problem.split is not None:
        wave_part, visc_part = problem.parts(f)
    return SolveReport(
        f=f, converged=converged, iterations=iterations, objective=objective,
        wave_part=wave_part, viscous_part=visc_part,
        multiplier_bound=lam1, multiplier_volume=lam2, kkt=raw, residuals=scaled,
        steps=(dr1, dr2), residual_history=history)


# ---------------------------------------------------------------------------
# Independent reference solver (cross-validation only).
# ---------------------------------------------------------------------------

def project_volume_simplex(c: np.ndarray, alpha: np.ndarray, vtilde: float,
                           bisections: int = 100) -> np.ndarray:
    """Euclidean projection onto {G >= 0, alpha^t G = Vt}.

    The KKT form is G = max(c - tau alpha, 0) with tau fixed by the volume;
    alpha^t max(c - tau alpha, 0) is decreasing in tau, so tau is found by
    bisection on a guaranteed bracket.
    """
    c = np.asarray(c, dtype=float)
    lo = (float(alpha @ c) - vtilde) / float(alpha @ alpha)   # unclipped solution
    hi = float(np.max(c / alpha))                             # all clipped -> volume 0
    if hi <= lo:
        hi = lo + 1.0
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if float(alpha @ np.maximum(c - mid * alpha, 0.0)) > vtilde:
            lo = mid
        else:
            hi = mid
    return np.maximum(c - 0.5 * (lo + hi) * alpha, 0.0)


def reference_qp_oracle(problem: QpProblem, max_iter: int = 500_000,
                        tol: float = 1e-11, accelerated: bool = True,
                        on_iterate=None) -> np.ndarray:
    """Projected-gradient minimizer over the same feasible set.

    Deterministic, monotone in the objective (accelerated steps are accepted
    only when they do not increase it), with step 1/(2 lambda_max(Q)).
    Intended as a slow independent check of `uzawa_solve`, not for
    production runs.  `on_iterate(x, objective)` is called once per step.
    """
    Q, alpha, vtilde = problem.Q, problem.alpha, problem.vtilde
    n = problem.n
    y = np.ones(n) / math.sqrt(n)
    norm = 1.0
    for _ in range(60):
        y = Q @ y
        norm = float(np.linalg.norm(y))
        y /= norm
    step = 1.0 / (2.0 * norm)

    x = project_volume_simplex(np.full(n, vtilde / float(alpha.sum())), alpha, vtilde)
    obj = problem.objective(x)
    yk = x.copy()
    tk = 1.0
    for it in range(max_iter):
        z = project_volume_simplex(yk - step * 2.0 * (Q @ yk), alpha, vtilde)
        obj_z = problem.objective(z)
        if accelerated and obj_z > obj:
            # momentum overshoot: fall back to a plain step from x
            z_pg = project_volume_simplex(x - step * 2.0 * (Q @ x), alpha, vtilde)
            obj_pg = problem.objective(z_pg)
            if obj_pg <= obj:
                x_new, obj_new = z_pg, obj_pg
            else:
                x_new, obj_new = x, obj
        else:
            x_new, obj_new = z, obj_z
        if accelerated:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
            yk = x_new + ((tk - 1.0) / t_new) * (x_new - x) + (tk / t_new) * (z - x_new)
            tk = t_new
        else:
            yk = x_new
        delta = float(np.max(np.abs(x_new - x))) / max(float(np.max(np.abs(x_new))), 1e-300)
        x, obj = x_new, obj_new
        if on_iterate is not None:
            on_iterate(x, obj)
        if it > 50 and delta < tol:
            break
    return x
