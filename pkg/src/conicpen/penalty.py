"""Quadratic-penalty sequence with multiplier recovery.

For a penalty weight ``k`` and an anchor point ``a`` the subproblem is::

    phi_k(x) = f(x) + (w/2) ||x - a||^2 + (k/2) dist(h(x), K)^2

and the multiplier estimate at its minimizer is ``k * P_polar(h(x))``,
which lies in the polar cone by construction.

Two drivers are provided. :func:`replay` anchors every subproblem at a
known local solution and restricts it to a ball around that point, which
makes the iterates converge to the solution and the estimates to a
multiplier whenever the constraints are regular there. :func:`solve`
anchors each subproblem at the previous iterate, drops the ball, and stops
once the KKT residuals are small.

The inner minimizer is first order and only certifies stationarity, not
global optimality of the subproblem.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .cones import dist_to_cone, dist_to_polar, penalty_grad_chain, penalty_value, project, project_polar
from .expr import ExprDomainError
from .kkt import KKT_TOL, KKTReport, kkt_residuals
from .problem import FEASIBILITY_TOL, Problem

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MIN_STEP = 1e-18
EPS = np.finfo(float).eps
NOISE_FACTOR = 10.0
NONMONOTONE_MEMORY = 10
# inner runs end as "stalled" after this many iterations without a new best
# stationarity (the gradient has hit its rounding floor)
PATIENCE = 300
# floor and scale of the k-dependent inner tolerance max(floor, scale/sqrt(k))
INNER_TOL_SCALE = 1e-6
# ||lambda|| growing faster than k**DIVERGENCE_EXPONENT for DIVERGENCE_WINDOW
# consecutive outer steps is reported as a suspected regularity failure
DIVERGENCE_EXPONENT = 1.0 / 6.0
DIVERGENCE_WINDOW = 3


class PenaltyError(RuntimeError):
    """Failure inside the outer loop; ``k`` is the offending penalty weight."""

    def __init__(self, message, k=None):
        super().__init__(message if k is None else f"{message} (k={k:g})")
        self.k = k


class LineSearchError(PenaltyError):
    """Armijo backtracking shrank the step below MIN_STEP."""


@dataclass
class SolverConfig:
    k0: float = 1.0
    rho: float = 10.0
    max_outer: int = 20
    inner_tol: float = 1e-9
    inner_max_iter: int = 5000
    delta: float = 1.0
    prox_weight: float = 1.0
    seed: int = 0
    tol: float = KKT_TOL

    def __post_init__(self):
        if not self.k0 > 0:
            raise ValueError("k0 must be positive")
        if not self.rho > 1:
            raise ValueError("rho must be greater than 1")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.inner_max_iter < 1:
            raise ValueError("inner_max_iter must be at least 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.prox_weight < 0:
            raise ValueError("prox_weight must be nonnegative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def weights(self):
        return [self.k0 * self.rho ** j for j in range(self.max_outer)]

    def inner_tolerance(self, k):
        return max(self.inner_tol, INNER_TOL_SCALE / math.sqrt(k))


@dataclass
class IterateRecord:
    k: float
    x: np.ndarray
    lam: np.ndarray
    phi: float
    stationarity: float
    feasibility: float
    complementarity: float
    dual_feasibility: float
    inner_iters: int
    inner_status: str
    interior: Optional[bool] = None

    def to_row(self):
        return {
            "k": self.k,
            "stationarity": self.stationarity,
            "feasibility": self.feasibility,
            "complementarity": self.complementarity,
            "dual_feasibility": self.dual_feasibility,
            "phi": self.phi,
            "inner_iters": self.inner_iters,
        }


@dataclass
class InnerResult:
    x: np.ndarray
    iters: int
    achieved: float
    status: str  # "converged", "max_iter" or "stalled"
    value: float

    @property
    def converged(self):
        return self.status == "converged"


def phi_eval_grad(p: Problem, anchor, k, x, prox_weight=1.0):
    """Value and gradient of the penalized subproblem at ``x``."""
    x = np.asarray(x, dtype=float)
    d = x - anchor
    hx = p.h(x)
    J = p.jac_h(x)
    val = p.f(x) + 0.5 * prox_weight * float(d @ d) + 0.5 * k * penalty_value(p.cone, hx)
    g = p.grad_f(x) + prox_weight * d + 0.5 * k * penalty_grad_chain(p.cone, hx, J)
    return val, g


def multiplier_estimate(p: Problem, x, k) -> np.ndarray:
    return k * project_polar(p.cone, p.h(x))


def solve_inner(fun: Callable, x0, tol, max_iter=5000,
                project_fn: Optional[Callable] = None, memory=NONMONOTONE_MEMORY) -> InnerResult:
    """Minimize by gradient descent with Armijo backtracking and BB steps.

    The Armijo reference value is the largest of the last ``memory``
    accepted values (``memory=1`` is the classical monotone rule), which
    lets Barzilai-Borwein steps through in curved valleys while never
    exceeding the starting value.

    ``fun(x)`` returns ``(value, gradient)``. With ``project_fn`` the method
    becomes projected gradient and stationarity is measured by the norm of
    ``x - project_fn(x - g)``. A step that cannot move ``x`` in floating
    point, or ``PATIENCE`` iterations without a new best stationarity value,
    ends the run with status ``"stalled"``.
    """
    x = np.array(x0, dtype=float)
    if project_fn is not None:
        x = project_fn(x)
    v, g = fun(x)
    if not np.isfinite(v) or not np.all(np.isfinite(g)):
        raise PenaltyError("objective is not finite at the starting point")
    step = None
    it = 0
    recent = deque([v], maxlen=max(1, memory))
    best = (math.inf, x, v, 0)
    while True:
        G = g if project_fn is None else x - project_fn(x - g)
        achieved = float(np.linalg.norm(G))
        if achieved <= tol:
            return InnerResult(x, it, achieved, "converged", v)
        if achieved < best[0]:
            best = (achieved, x, v, it)
        elif it - best[3] >= PATIENCE:
            return InnerResult(best[1], it, best[0], "stalled", best[2])
        if it >= max_iter:
            return InnerResult(best[1], it, best[0], "max_iter", best[2])

        t = step if step is not None else 1.0 / max(1.0, float(np.linalg.norm(g)))
        ref = max(recent)
        while True:
            xt = x - t * g
            if project_fn is not None:
                xt = project_fn(xt)
            d = xt - x
            if not np.any(d):
                return InnerResult(x, it, achieved, "stalled", v)
            try:
                vt, gt = fun(xt)
                slope = float(g @ d)
                ok = np.isfinite(vt) and (
                    vt <= ref + ARMIJO_C * slope
                    # inside the rounding band of f, use the derivative form of
                    # the same condition (exact on quadratics)
                    or (vt <= v + NOISE_FACTOR * EPS * (1.0 + abs(v))
                        and float(gt @ d) <= (2.0 * ARMIJO_C - 1.0) * slope))
            except ExprDomainError:
                ok = False
            if ok and np.all(np.isfinite(gt)):
                break
            t *= 0.5
            if t < MIN_STEP:
                raise LineSearchError(
                    f"line search failed at |grad| = {achieved:.3e}; "
                    "the subproblem may be nonsmooth or overflowing")

        s = xt - x
        y = gt - g
        sy = float(s @ y)
        # BB1 step; keep the accepted step when curvature is not positive
        step = float(s @ s) / sy if sy > 0 else 2.0 * t
        x, v, g = xt, vt, gt
        recent.append(v)
        it += 1


def _record(p, k, x, lam, phi, grad, inner, interior=None):
    hx = p.h(x)
    return IterateRecord(
        k=float(k),
        x=x.copy(),
        lam=lam,
        phi=float(phi),
        stationarity=float(np.linalg.norm(grad)),
        feasibility=dist_to_cone(p.cone, hx),
        complementarity=abs(float(hx @ lam)),
        dual_feasibility=dist_to_polar(p.cone, lam),
        inner_iters=inner.iters,
        inner_status=inner.status,
        interior=interior,
    )


def _ball_projector(center, radius):
    def proj(x):
        d = x - center
        r = float(np.linalg.norm(d))
        if r <= radius:
            return x
        return center + (radius / r) * d
    return proj


def replay(p: Problem, xbar=None, cfg: Optional[SolverConfig] = None):
    """Run the penalty sequence anchored at the local solution ``xbar``.

    Each subproblem is minimized over the ball of radius ``cfg.delta``
    around ``xbar`` with unit proximal weight. The start is whichever of
    ``xbar`` and the previous iterate has the lower subproblem value, so
    ``phi_k(x^k) <= phi_k(xbar) = f(xbar)`` holds along the run.
    Returns the list of :class:`IterateRecord`.
    """
    cfg = cfg or SolverConfig()
    if xbar is None:
        xbar = p.known_solution
    if xbar is None:
        raise ValueError("replay needs xbar or a problem with known_solution")
    xbar = p.point(xbar, "xbar")
    d = dist_to_cone(p.cone, p.h(xbar))
    if d > FEASIBILITY_TOL:
        raise ValueError(f"xbar is infeasible: dist(h(xbar), K) = {d:.3e}")
    ball = _ball_projector(xbar, cfg.delta)

    trace = []
    x = xbar.copy()
    for k in cfg.weights():
        def fun(z, k=k):
            return phi_eval_grad(p, xbar, k, z, 1.0)

        start = x
        if phi_eval_grad(p, xbar, k, x, 1.0)[0] > p.f(xbar):
            start = xbar
        try:
            inner = solve_inner(fun, start, cfg.inner_tolerance(k), cfg.inner_max_iter, ball)
        except PenaltyError as exc:
            raise PenaltyError(str(exc), k) from exc
        x = inner.x
        phi, g = fun(x)
        interior = bool(np.linalg.norm(x - xbar) < cfg.delta * (1.0 - 1e-6))
        if not interior:
            logger.warning("replay iterate at k=%g lies on the trust-ball boundary", k)
        trace.append(_record(p, k, x, multiplier_estimate(p, x, k), phi, g, inner, interior))
    return trace


def multiplier_diverges(trace, window=DIVERGENCE_WINDOW, exponent=DIVERGENCE_EXPONENT):
    """True if ||lambda|| outgrew k**exponent over the last ``window`` outer steps.

    Bounded multiplier sequences have step ratios tending to 1; a sequence
    that never settles keeps growing like a positive power of k.
    """
    if len(trace) < window + 1:
        return False
    recent = trace[-(window + 1):]
    for a, b in zip(recent, recent[1:]):
        if b.k <= a.k:
            return False
        la = float(np.linalg.norm(a.lam))
        lb = float(np.linalg.norm(b.lam))
        if lb <= 0.0 or lb <= la * (b.k / a.k) ** exponent:
            return False
    return True


@dataclass
class SolveResult:
    x: np.ndarray
    lam: np.ndarray
    trace: list
    kkt: KKTReport
    converged: bool
    regularity_suspect: bool = False
    message: str = ""
    extras: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.x, self.lam, self.trace))


def solve(p: Problem, x0=None, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Practical penalty method: anchor at the previous iterate, no ball.

    The weight grows by ``cfg.rho`` after an outer step only while the
    feasibility or complementarity residual is above tolerance. When just
    stationarity is off, which with a proximal term is the drift
    ``||x^k - x^(k-1)||``, the weight is held and the step is repeated
    from the new anchor.

    Stops when :func:`kkt_residuals` passes at ``cfg.tol``, when the
    multipliers look unbounded (see :func:`multiplier_diverges`), or after
    ``cfg.max_outer`` outer steps. Without convergence the iterate with the
    smallest KKT residual is returned.
    """
    cfg = cfg or SolverConfig()
    if x0 is None:
        x0 = p.x0 if p.x0 is not None else np.zeros(p.n)
    x = p.point(x0, "x0")
    anchor = x.copy()
    trace = []
    best = None
    k = cfg.k0
    for _ in range(cfg.max_outer):
        def fun(z, k=k, anchor=anchor):
            return phi_eval_grad(p, anchor, k, z, cfg.prox_weight)

        try:
            inner = solve_inner(fun, x, cfg.inner_tolerance(k), cfg.inner_max_iter)
        except PenaltyError as exc:
            raise PenaltyError(str(exc), k) from exc
        x = inner.x
        phi, g = fun(x)
        lam = multiplier_estimate(p, x, k)
        trace.append(_record(p, k, x, lam, phi, g, inner))
        report = kkt_residuals(p, x, lam, cfg.tol)
        if best is None or report.max_residual() < best[2].max_residual():
            best = (x, lam, report)
        if report.passed:
            return SolveResult(x, lam, trace, report, True,
                               message=f"KKT residuals within tolerance at k={k:g}")
        if multiplier_diverges(trace):
            return SolveResult(
                x, lam, trace, report, False, regularity_suspect=True,
                message=f"multiplier estimates grow without bound (|lambda|={np.linalg.norm(lam):.3e}"
                        f" at k={k:g}); constraint regularity likely fails at the limit point")
        bound = cfg.tol * report.scale
        if report.feasibility > bound or report.complementarity > bound:
            k *= cfg.rho
        anchor = x.copy()
    x, lam, report = best
    return SolveResult(x, lam, trace, report, False,
                       message=f"no KKT point within tolerance after {cfg.max_outer} outer iterations")
