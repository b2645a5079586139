"""KKT residuals and constraint-regularity diagnostics for conic problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cones import Product, Zero, dist_to_cone, dist_to_polar, eigen_sym, project_polar
from .problem import Problem

KKT_TOL = 1e-6
RANK_TOL = 1e-8
EPS = np.finfo(float).eps


@dataclass
class KKTReport:
    stationarity: float
    feasibility: float
    complementarity: float
    dual_feasibility: float
    passed: bool
    tol: float
    scale: float

    def residuals(self):
        return (self.stationarity, self.feasibility, self.complementarity,
                self.dual_feasibility)

    def max_residual(self):
        return max(self.residuals())

    def to_json(self):
        return {
            "stationarity": self.stationarity,
            "feasibility": self.feasibility,
            "complementarity": self.complementarity,
            "dual_feasibility": self.dual_feasibility,
            "pass": self.passed,
            "tol": self.tol,
            "scale": self.scale,
        }


@dataclass
class RegularityReport:
    mode: str  # "licq" or "conic"
    verdict: bool
    tol: float
    min_singular_value: Optional[float] = None
    certificate_value: Optional[float] = None
    alpha: Optional[np.ndarray] = None
    heuristic: bool = False
    notes: list = field(default_factory=list)

    def to_json(self):
        d = {"mode": self.mode}
        if self.mode == "licq":
            d["min_singular_value"] = self.min_singular_value
        else:
            d["certificate_value"] = self.certificate_value
            d["alpha"] = None if self.alpha is None else self.alpha.tolist()
            d["heuristic"] = self.heuristic
        d["verdict"] = self.verdict
        d["tol"] = self.tol
        if self.notes:
            d["notes"] = list(self.notes)
        return d


def kkt_residuals(p: Problem, x, lam, tol=KKT_TOL) -> KKTReport:
    """Residuals of stationarity, feasibility, complementarity and dual feasibility.

    ``pass`` means every residual is at most ``tol * (1 + ||grad f(x)||)``.
    """
    x = p.point(x)
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != p.m:
        raise ValueError(f"multiplier has dimension {lam.size}, expected {p.m}")
    g = p.grad_f(x)
    hx = p.h(x)
    J = p.jac_h(x)
    stat = float(np.linalg.norm(g + J.T @ lam))
    feas = dist_to_cone(p.cone, hx)
    comp = abs(float(hx @ lam))
    dual = dist_to_polar(p.cone, lam)
    scale = 1.0 + float(np.linalg.norm(g))
    ok = max(stat, feas, comp, dual) <= tol * scale
    return KKTReport(stat, feas, comp, dual, bool(ok), tol, scale)


def is_zero_cone(K):
    if isinstance(K, Zero):
        return True
    return isinstance(K, Product) and all(is_zero_cone(c) for c in K.parts)


def licq_check(p: Problem, x, tol=RANK_TOL) -> RegularityReport:
    """Linear independence of the constraint gradients at ``x``.

    The smallest singular value of the Jacobian comes from the smallest
    eigenvalue of ``J J^T``; eigenvalues under the roundoff floor
    ``m * eps * lambda_max`` count as zero. Passes when
    ``sigma_min > tol * sigma_max``.
    """
    if not is_zero_cone(p.cone):
        raise ValueError(
            "licq_check applies to pure equality constraints (zero cone); "
            "use conic_regularity_check for general cones")
    x = p.point(x)
    if p.m == 0:
        return RegularityReport("licq", True, tol, min_singular_value=math.inf,
                                notes=["no constraints"])
    J = p.jac_h(x)
    lam = eigen_sym(J @ J.T).values
    lmax, lmin = lam[0], lam[-1]
    if lmin <= p.m * EPS * lmax:
        lmin = 0.0
    smin = math.sqrt(max(lmin, 0.0))
    smax = math.sqrt(max(lmax, 0.0))
    return RegularityReport("licq", bool(smin > tol * smax), tol, min_singular_value=smin)


def _polar_unit(K, v):
    w = project_polar(K, v)
    nrm = np.linalg.norm(w)
    return (w / nrm) if nrm > 1e-12 else None


def conic_regularity_check(p: Problem, x, multistarts=50, seed=0, tol=RANK_TOL,
                           max_iter=300) -> RegularityReport:
    """Estimate min of ||J^T a||^2 + <h(x), a>^2 over unit ``a`` in the polar cone.

    A zero minimum exhibits a nonzero polar direction annihilated by the
    adjoint and orthogonal to h(x), i.e. a failure of the conic linear
    independence condition. The search is multistart projected gradient
    on a nonconvex set, so a positive verdict is evidence and not proof.
    """
    x = p.point(x)
    K = p.cone
    notes = ["HEURISTIC: a positive verdict is evidence, not proof"]
    if p.m == 0:
        return RegularityReport("conic", True, tol, certificate_value=math.inf,
                                heuristic=True, notes=notes + ["no constraints"])
    hx = p.h(x)
    feas = dist_to_cone(K, hx)
    if feas > 1e-6:
        notes.append(f"point is not feasible: dist(h(x), K) = {feas:.3e}")
    M = np.vstack([p.jac_h(x).T, hx[None, :]])
    G = M.T @ M
    L = 2.0 * max(eigen_sym(G).values[0], 0.0)
    rng = np.random.default_rng(seed)

    best_val = math.inf
    best_alpha = None
    for _ in range(multistarts):
        a = None
        for _ in range(100):
            a = _polar_unit(K, rng.standard_normal(p.m))
            if a is not None:
                break
        if a is None:
            continue
        if L > 0.0:
            for _ in range(max_iter):
                nxt = _polar_unit(K, a - (2.0 / L) * (G @ a))
                if nxt is None:
                    break
                done = np.linalg.norm(nxt - a) <= 1e-13
                a = nxt
                if done:
                    break
        r = M @ a
        val = float(r @ r)
        if val < best_val:
            best_val, best_alpha = val, a

    if best_alpha is None:
        # polar cone is {0}: the implication holds vacuously
        return RegularityReport("conic", True, tol, certificate_value=math.inf,
                                heuristic=True, notes=notes + ["polar cone is trivial"])
    return RegularityReport("conic", bool(best_val > tol), tol, certificate_value=best_val,
                            alpha=best_alpha, heuristic=True, notes=notes)
