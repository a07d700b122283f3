"""L-BFGS minimizer and the smoothed-TV continuation loop for weighted matching.

The joint variable is ``z = (controls[1:], delta_rho)``: the free time slices
of the path flattened in (time, variable, coordinate) order, followed by the
per-edge weight change. The first time slice is the fitted source and stays
fixed.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from scipy.linalg import cho_factor, cho_solve

from .graphcore import DegenerateCurveError

from .metric import ImmersionError, path_energy_gradient, spatial_stiffness
from .regularizer import HuberParams, huber, huber_grad, shrink, tv_norm, zero_one_penalty
from .spline import PathSpline
from .varifold import gradient as varifold_gradient
from .varifold import gram_matrix

if TYPE_CHECKING:
    from .problem import MatchProblem, MatchResult

__all__ = [
    "LbfgsConfig",
    "SfistaSchedule",
    "LbfgsResult",
    "NonFiniteEnergyError",
    "lbfgs_minimize",
    "SmoothedEnergy",
    "assemble_energy",
    "sfista_match",
]

logger = logging.getLogger(__name__)


class NonFiniteEnergyError(FloatingPointError):
    """The objective is not finite at the starting point."""


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 20
    g_tol: float = 1e-10
    f_tol: float = 1e-14
    max_iter: int = 500
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_evals: int = 40

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")


@dataclass(frozen=True)
class SfistaSchedule:
    """Geometric smoothing schedule gamma_j = gamma0 * growth**j, j < stages.

    ``warm_weights`` controls a weights-only solve on the undeformed source
    before the first stage, which lets large mass differences be absorbed by
    the weights before the geometry moves. ``"compare"`` runs the first stage
    from both starts and keeps the lower energy; that costs one extra stage but
    avoids erasing parts that only need to be moved.
    """

    gamma0: float = 1.0
    growth: float = 5.0
    stages: int = 6
    warm_weights: str = "compare"

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.growth > 1 and self.stages >= 1):
            raise ValueError("need gamma0 > 0, growth > 1 and stages >= 1")
        if self.warm_weights not in ("off", "on", "compare"):
            raise ValueError("warm_weights must be 'off', 'on' or 'compare'")

    def gammas(self) -> list[float]:
        return [self.gamma0 * self.growth**j for j in range(self.stages)]


@dataclass
class LbfgsResult:
    z: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    converged: bool
    message: str
    energies: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)

    @property
    def line_search_failed(self) -> bool:
        return self.message == "line search failed"


_RECOVERABLE = (ImmersionError, DegenerateCurveError, FloatingPointError)


def _safe_eval(fun, z):
    try:
        with np.errstate(over="raise", invalid="raise"):
            f, g = fun(z)
    except _RECOVERABLE:
        return math.inf, None
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return math.inf, None
    return float(f), g


def _cubic_min(a, fa, da, b, fb, db):
    if db is None or not np.isfinite(fb):
        return None
    d1 = da + db - 3 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    den = db - da + 2 * d2
    if den == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / den


def _strong_wolfe(fun, z, f0, g0, p, step0, cfg: LbfgsConfig):
    """Line search satisfying the strong Wolfe conditions.

    Returns (step, f, g, n_evals) or (None, ...) with the best Armijo point, if any.
    """
    d0 = float(g0 @ p)
    evals = 0
    best = (None, f0, None)

    def phi(a):
        nonlocal evals, best
        evals += 1
        f, g = _safe_eval(fun, z + a * p)
        d = float(g @ p) if g is not None else None
        if f < best[1] and f <= f0 + cfg.c1 * a * d0:
            best = (a, f, g)
        return f, g, d

    def zoom(lo, f_lo, d_lo, g_lo, hi, f_hi, d_hi):
        while evals < cfg.max_ls_evals:
            a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            width = hi - lo
            if a is None or not (min(lo, hi) + 0.1 * abs(width) <= a <= max(lo, hi) - 0.1 * abs(width)):
                a = lo + 0.5 * width
            f, g, d = phi(a)
            if not np.isfinite(f) or f > f0 + cfg.c1 * a * d0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -cfg.c2 * d0:
                    return a, f, g
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo, g_lo = a, f, d, g
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None, None, None

    a_prev, f_prev, d_prev, g_prev = 0.0, f0, d0, g0
    a = step0
    for i in range(cfg.max_ls_evals):
        f, g, d = phi(a)
        if not np.isfinite(f) or f > f0 + cfg.c1 * a * d0 or (i > 0 and f >= f_prev):
            res = zoom(a_prev, f_prev, d_prev, g_prev, a, f, d)
            break
        if abs(d) <= -cfg.c2 * d0:
            res = (a, f, g)
            break
        if d >= 0:
            res = zoom(a, f, d, g, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev, g_prev = a, f, d, g
        a *= 2.0
        if evals >= cfg.max_ls_evals:
            res = (None, None, None)
            break
    else:
        res = (None, None, None)
    if res[0] is not None:
        return res[0], res[1], res[2], evals, True
    return best[0], best[1], best[2], evals, False


def lbfgs_minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    z0: np.ndarray,
    cfg: LbfgsConfig | None = None,
    precondition: Callable[[np.ndarray], np.ndarray] | None = None,
) -> LbfgsResult:
    """Minimize a smooth function given as ``z -> (value, gradient)``.

    ``precondition`` applies a fixed symmetric positive definite approximation
    of the inverse Hessian; it seeds the two-loop recursion in place of the
    identity. Accepted iterates never increase the energy. On line-search
    failure the best point found so far is returned with ``converged=False``.
    """
    cfg = cfg or LbfgsConfig()
    z = np.array(z0, dtype=float)
    f, g = fun(z)
    f = float(f)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteEnergyError(f"objective not finite at the starting point (f={f})")
    res = LbfgsResult(z, f, g, 0, False, "", [f], [float(np.abs(g).max(initial=0.0))], [0.0])
    if res.grad_norms[0] <= cfg.g_tol:
        res.converged, res.message = True, "gradient tolerance"
        return res

    S: deque = deque(maxlen=cfg.memory)
    Y: deque = deque(maxlen=cfg.memory)
    for it in range(1, cfg.max_iter + 1):
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(S, Y))):
            r = 1.0 / (y @ s)
            a = r * (s @ q)
            q -= a * y
            alphas.append((r, a))
        if precondition is not None:
            q = precondition(q)
            if S:
                q *= (S[-1] @ Y[-1]) / (Y[-1] @ precondition(Y[-1]))
        elif S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        for (s, y), (r, a) in zip(zip(S, Y), reversed(alphas)):
            b = r * (y @ q)
            q += (a - b) * s
        p = -q
        if g @ p >= 0:
            S.clear()
            Y.clear()
            p = -precondition(g) if precondition is not None else -g
        if S or precondition is not None:
            step0 = 1.0
        else:
            step0 = min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        step, f_new, g_new, _, ok = _strong_wolfe(fun, z, f, g, p, step0, cfg)
        if step is None:
            res.message = "line search failed"
            break
        s = step * p
        y = g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        z = z + s
        f_old, f, g = f, f_new, g_new
        res.z, res.f, res.g, res.iterations = z, f, g, it
        res.energies.append(f)
        res.grad_norms.append(float(np.abs(g).max()))
        res.steps.append(float(step))
        if res.grad_norms[-1] <= cfg.g_tol:
            res.converged, res.message = True, "gradient tolerance"
            break
        if (f_old - f) <= cfg.f_tol * max(abs(f_old), abs(f), 1.0):
            res.converged, res.message = True, "energy tolerance"
            break
        if not ok:
            logger.debug("iteration %d: curvature condition not met, keeping best Armijo point", it)
    else:
        res.message = "iteration limit"
    return res


_DENSE_LIMIT = 4000


class SmoothedEnergy:
    """Huber-smoothed matching energy at a fixed gamma, as a function of z.

    With ``weights_free=False`` the variable holds control points only and
    delta_rho stays at zero (the plain varifold-relaxed matching).
    """

    def __init__(self, problem: "MatchProblem", gamma: float, weights_free: bool = True):
        self.problem = problem
        self.disc = problem.disc
        self.gamma = float(gamma)
        self.weights_free = weights_free
        self.huber = HuberParams(problem.alpha, gamma) if problem.alpha > 0 else None
        self.n_ctrl = self.disc.n_control_vars
        self.size = self.n_ctrl + (self.disc.n_edges if weights_free else 0)

    def preconditioner(self) -> Callable[[np.ndarray], np.ndarray]:
        """Inverse of a fixed SPD model Hessian.

        Controls: the path-energy Hessian with the metric frozen at the source,
        2 (M_t kron S_theta) on the free time slices. Weight changes: the
        diagonal curvature of the varifold, penalty and Huber terms at the start.
        """
        disc, pb = self.disc, self.problem
        lay, quad = disc.layout, disc.quad
        B1 = quad.Bt[1]
        Mt = (B1.T * quad.wt) @ B1
        Mt = 2.0 * Mt[1:, 1:]
        S = spatial_stiffness(disc.P0, pb.metric, quad)
        S[np.diag_indices_from(S)] += 1e-10 * np.trace(S) / len(S)
        S_fac = cho_factor(S)
        Mt_fac = cho_factor(Mt)
        shape = (lay.n_t - 1, lay.n_vars, lay.dim)
        n_ctrl = self.n_ctrl
        if self.weights_free:
            rho_solve = self._weight_preconditioner()

        def apply(v: np.ndarray) -> np.ndarray:
            X = v[:n_ctrl].reshape(shape)
            Y = cho_solve(S_fac, X.transpose(1, 0, 2).reshape(lay.n_vars, -1))
            Y = Y.reshape(lay.n_vars, shape[0], lay.dim).transpose(1, 0, 2)
            Y = cho_solve(Mt_fac, Y.reshape(shape[0], -1)).ravel()
            if not self.weights_free:
                return Y
            return np.concatenate([Y, rho_solve(v[n_ctrl:])])

        return apply

    def _weight_preconditioner(self) -> Callable[[np.ndarray], np.ndarray]:
        """Solve with the weight-block model Hessian at the source.

        2 lam diag(l) K diag(l) + 16 beta diag(l) + gamma D^T D, with K the
        kernel Gram matrix of the source edges. The varifold part is dense and
        close to low rank, so a diagonal model badly mis-scales smooth weight
        changes; above ``_DENSE_LIMIT`` edges the diagonal is used anyway.
        """
        disc, pb = self.disc, self.problem
        graph = disc.graph_from_slice(disc.P0, disc.rho0)
        ell = graph.lengths
        n = len(ell)
        diag_extra = 16 * pb.penalty.beta * ell
        deg = _degree(disc.D) if self.huber is not None else np.zeros(n)
        if n > _DENSE_LIMIT:
            diag = 2 * pb.lam * ell**2 + diag_extra + self.gamma * deg
            inv_diag = 1.0 / np.maximum(diag, 1e-12 * diag.max(initial=1.0))
            return lambda v: inv_diag * v
        H = 2 * pb.lam * (ell[:, None] * gram_matrix(graph, pb.kernel) * ell[None, :])
        H[np.diag_indices(n)] += diag_extra
        if self.huber is not None:
            H += self.gamma * _dtd(disc.D)
        H[np.diag_indices(n)] += 1e-8 * np.trace(H) / n
        fac = cho_factor(H)
        return lambda v: cho_solve(fac, v)

    def warm_start_weights(self, z: np.ndarray, cfg: LbfgsConfig) -> np.ndarray:
        """Minimize over delta_rho alone with the controls in ``z`` held fixed."""
        if not self.weights_free:
            return z
        n = self.n_ctrl

        def fun(r):
            f, g = self(np.concatenate([z[:n], r]))
            return f, g[n:]

        res = lbfgs_minimize(fun, z[n:], cfg, self._weight_preconditioner())
        logger.info("weight warm start: %d iterations, energy %.6g (%s)", res.iterations, res.f, res.message)
        return np.concatenate([z[:n], res.z])

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        controls = self.disc.controls_from(z[: self.n_ctrl])
        if self.weights_free:
            return controls, np.asarray(z[self.n_ctrl :])
        return controls, np.zeros(self.disc.n_edges)

    def initial(self) -> np.ndarray:
        lay = self.disc.layout
        ctrl = np.repeat(self.disc.P0[None], lay.n_t - 1, axis=0).ravel()
        if self.weights_free:
            return np.concatenate([ctrl, np.zeros(self.disc.n_edges)])
        return ctrl

    def evaluate(self, z: np.ndarray, want_grad: bool = True):
        """Return (total, gradient or None, breakdown)."""
        pb, disc = self.problem, self.disc
        controls, drho = self.split(z)
        path = PathSpline(disc.layout, controls)
        e_path, g_ctrl = path_energy_gradient(path, pb.metric, disc.quad)
        rho = disc.rho0 + drho
        graph = disc.graph_from_slice(controls[-1], rho)
        d2, gv_var, gr_var = varifold_gradient(graph, disc.target, pb.kernel, bb=disc.target_self)
        parts = {"path_energy": e_path, "varifold": pb.lam * d2}
        g_last_vertices = [pb.lam * g for g in gv_var]
        g_rho = pb.lam * gr_var
        if self.weights_free:
            beta = pb.penalty.beta
            if beta > 0:
                pen, gv_pen, gr_pen = zero_one_penalty(graph, pb.penalty)
                parts["penalty"] = beta * pen
                g_last_vertices = [a + beta * b for a, b in zip(g_last_vertices, gv_pen)]
                g_rho = g_rho + beta * gr_pen
            else:
                parts["penalty"] = 0.0
            Dd = disc.D.apply(drho)
            if self.huber is not None:
                parts["huber"] = float(np.sum(huber(Dd, self.huber)))
                g_rho = g_rho + disc.D.adjoint(huber_grad(Dd, self.huber))
                parts["tv"] = pb.alpha * tv_norm(drho, disc.D)
            else:
                parts["huber"] = parts["tv"] = 0.0
        total = parts["path_energy"] + parts["varifold"] + parts.get("penalty", 0.0) + parts.get("huber", 0.0)
        parts["total"] = total
        if not want_grad:
            return total, None, parts
        g_ctrl[-1] += disc.slice_grad(g_last_vertices)
        grad = g_ctrl[1:].ravel()
        if self.weights_free:
            grad = np.concatenate([grad, g_rho])
        return total, grad, parts

    def __call__(self, z: np.ndarray):
        total, grad, _ = self.evaluate(z)
        return total, grad

    def breakdown(self, z: np.ndarray) -> dict[str, float]:
        return self.evaluate(z, want_grad=False)[2]


def _dtd(D) -> np.ndarray:
    """Dense D^T D."""
    out = np.zeros((D.n, D.n))
    i = D._left
    np.add.at(out, (i, i), 1.0)
    np.add.at(out, (i + 1, i + 1), 1.0)
    np.add.at(out, (i, i + 1), -1.0)
    np.add.at(out, (i + 1, i), -1.0)
    return out


def _degree(D) -> np.ndarray:
    """Diagonal of D^T D: number of differences each entry takes part in."""
    out = np.zeros(D.n)
    np.add.at(out, D._left, 1.0)
    np.add.at(out, D._left + 1, 1.0)
    return out


def assemble_energy(problem: "MatchProblem", gamma: float, weights_free: bool = True) -> SmoothedEnergy:
    return SmoothedEnergy(problem, gamma, weights_free)


def _stage_record(energy: SmoothedEnergy, res: LbfgsResult):
    from .problem import StageRecord

    pb = energy.problem
    parts = energy.breakdown(res.z)
    if energy.weights_free and energy.huber is not None:
        _, drho = energy.split(res.z)
        Dd = energy.disc.D.apply(drho)
        gap = parts["tv"] - parts["huber"]
        bound = len(Dd) * pb.alpha**2 / (2 * energy.gamma)
        resid = float(np.linalg.norm(shrink(Dd, energy.huber.threshold) - Dd))
    else:
        gap = bound = resid = 0.0
    return StageRecord(
        gamma=energy.gamma,
        iterations=res.iterations,
        converged=res.converged,
        message=res.message,
        energies=list(res.energies),
        grad_norms=list(res.grad_norms),
        steps=list(res.steps),
        huber_gap=float(gap),
        gap_bound=float(bound),
        residual=resid,
        breakdown=parts,
    )


def sfista_match(
    problem: "MatchProblem",
    schedule: SfistaSchedule | None = None,
    lbfgs: LbfgsConfig | None = None,
    weights_free: bool = True,
    checkpoint: str | None = None,
) -> "MatchResult":
    """Minimize the smoothed energy for increasing gamma with warm starts.

    Stage 0 starts from the constant path at the source with delta_rho = 0.
    If a stage fails to produce a finite energy the best completed stage is
    returned with ``success=False``.
    """
    from .problem import MatchResult

    schedule = schedule or problem.schedule
    lbfgs = lbfgs or problem.lbfgs
    gammas = schedule.gammas() if weights_free else [schedule.gammas()[-1]]
    z = None
    stages = []
    success, message = True, ""
    energy = None
    for j, gamma in enumerate(gammas):
        stage_energy = assemble_energy(problem, gamma, weights_free)
        try:
            if z is None:
                res = _first_stage(stage_energy, lbfgs, schedule.warm_weights)
            else:
                res = lbfgs_minimize(stage_energy, z, lbfgs, stage_energy.preconditioner())
        except (NonFiniteEnergyError, *_RECOVERABLE) as exc:
            success, message = False, f"stage {j} (gamma={gamma:g}) failed: {exc}"
            logger.warning(message)
            if z is None:
                raise
            break
        z, energy = res.z, stage_energy
        rec = _stage_record(stage_energy, res)
        stages.append(rec)
        logger.info(
            "stage %d gamma=%g iters=%d energy=%.6g (%s)", j, gamma, res.iterations, res.f, res.message
        )
        if checkpoint:
            _write_checkpoint(checkpoint, stages, z)

    controls, drho = energy.split(z)
    final = stages[-1].breakdown
    breakdown = {
        "path_energy": final["path_energy"],
        "varifold": final["varifold"],
        "tv": final.get("tv", 0.0),
        "penalty": final.get("penalty", 0.0),
        "huber": final.get("huber", 0.0),
        "smoothed_total": final["total"],
    }
    return MatchResult(
        problem=problem,
        path=PathSpline(problem.disc.layout, controls),
        delta_rho=np.array(drho),
        rho0=problem.disc.rho0.copy(),
        breakdown=breakdown,
        stages=stages,
        fixed_weights=not weights_free,
        success=success,
        message=message,
    )


def _first_stage(energy: SmoothedEnergy, cfg: LbfgsConfig, warm: str) -> LbfgsResult:
    z0 = energy.initial()
    precond = energy.preconditioner()
    if not energy.weights_free or warm == "off":
        return lbfgs_minimize(energy, z0, cfg, precond)
    warmed = lbfgs_minimize(energy, energy.warm_start_weights(z0, cfg), cfg, precond)
    if warm == "on":
        return warmed
    plain = lbfgs_minimize(energy, z0, cfg, precond)
    logger.info("first stage: plain start %.6g, weight warm start %.6g", plain.f, warmed.f)
    return warmed if warmed.f < plain.f else plain


def _write_checkpoint(path: str, stages, z: np.ndarray) -> None:
    doc = {
        "format": "shapegraph-checkpoint",
        "version": 1,
        "variable_order": "controls[1:] (time, variable, coordinate) then delta_rho",
        "stages": [{"gamma": s.gamma, "breakdown": s.breakdown, "iterations": s.iterations} for s in stages],
        "z": [float(x) for x in z],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
