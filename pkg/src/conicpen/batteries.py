"""Randomized property batteries for cones and expression derivatives.

Both batteries return plain dicts of worst-case residuals together with the
tolerance each residual is held to, so callers can print or assert them.
"""

from __future__ import annotations

import math

import numpy as np

from . import expr as ex
from .cones import (Cone, Lorentz, Product, Zero, moreau_check, penalty_value, project,
                    project_polar)

FD_STEP = 1e-6

CONE_TOLERANCES = {
    "recon": 0.0,
    "orth": 1e-8,
    "characterization": 1e-8,
    "idempotence": 1e-10,
    "homogeneity": 1e-10,
    "lipschitz": 1e-12,
    "gradient": 1e-5,
}
GRAD_TOLERANCE = 1e-5


def random_points(K: Cone, rng, size):
    """Gaussian points with magnitudes spread over a few decades."""
    z = rng.standard_normal((size, K.dim))
    scale = 10.0 ** rng.uniform(-1.0, 1.0, size)
    return z * scale[:, None]


def lorentz_boundary_points(K: Lorentz, rng, size, rel=1e-3):
    """Points with ||z2|| = |z1| * (1 +- rel), on both sides of K and of its polar.

    |z1| is log-uniform on [0.1, 10] like :func:`random_points`. Much smaller
    magnitudes would put the cone boundary within one finite-difference
    step of the point, where central differences stop being an oracle.
    """
    d = K.dim
    if d < 2:
        return np.empty((0, d))
    z1 = rng.choice([-1.0, 1.0], size) * 10.0 ** rng.uniform(-1.0, 1.0, size)
    u = rng.standard_normal((size, d - 1))
    u /= np.linalg.norm(u, axis=1)[:, None]
    factor = 1.0 + rel * rng.choice([-1.0, 1.0], size)
    return np.column_stack([z1, (np.abs(z1) * factor)[:, None] * u])


def fd_gradient(fun, z, h=FD_STEP):
    g = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (fun(z + e) - fun(z - e)) / (2.0 * h)
    return g


def _gradient_error(K, z):
    exact = 2.0 * project_polar(K, z)
    approx = fd_gradient(lambda v: penalty_value(K, v), z)
    return float(np.linalg.norm(approx - exact)) / max(float(np.linalg.norm(exact)), 1e-8)


def _lorentz_parts(K):
    if isinstance(K, Lorentz):
        return [K]
    if isinstance(K, Product):
        return [c for part in K.parts for c in _lorentz_parts(part)]
    return []


def _embed_boundary(K, rng, size):
    """Random points whose Lorentz blocks sit near their cone boundaries."""
    z = random_points(K, rng, size)
    if isinstance(K, Lorentz):
        return lorentz_boundary_points(K, rng, size)
    if isinstance(K, Product):
        start = 0
        for part in K.parts:
            if isinstance(part, Lorentz) and part.dim >= 2:
                z[:, start:start + part.dim] = lorentz_boundary_points(part, rng, size)
            start += part.dim
    return z


def penalty_gradient_check(K: Cone, samples=200, rng=None):
    """Worst relative error of ``2 P_polar(z)`` against central differences.

    Uses ``samples`` random points plus, when ``K`` has Lorentz blocks, as
    many points with those blocks near the cone boundary. Returns the worst
    error and the number of points checked.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    G = random_points(K, rng, samples)
    if _lorentz_parts(K) and samples:
        G = np.vstack([G, _embed_boundary(K, rng, samples)])
    worst = max((_gradient_error(K, z) for z in G), default=0.0)
    return worst, int(len(G))


def cone_battery(K: Cone, samples=1000, seed=0, members=100, grad_samples=200):
    """Check the Moreau decomposition and projection properties of ``K``.

    For ``samples`` random points: reconstruction and orthogonality of the
    two projections, the variational inequality against ``members`` random
    elements of ``K``, idempotence, positive homogeneity and 1-Lipschitz
    continuity. For ``grad_samples`` points (plus as many near Lorentz
    boundaries, if any) the gradient ``2 P_polar(z)`` of the squared
    distance is compared with central differences.
    """
    rng = np.random.default_rng(seed)
    Z = random_points(K, rng, samples)
    worst = dict.fromkeys(CONE_TOLERANCES, 0.0)

    for i, z in enumerate(Z):
        recon, orth = moreau_check(K, z)
        nz = float(np.linalg.norm(z))
        worst["recon"] = max(worst["recon"], recon)
        worst["orth"] = max(worst["orth"], orth / (1.0 + nz * nz))

        p = project(K, z)
        C = K.sample(rng, members)
        lhs = (C - p) @ (z - p)
        bound = (1.0 + nz) * (1.0 + np.linalg.norm(C, axis=1))
        worst["characterization"] = max(worst["characterization"], float(np.max(lhs / bound)))

        worst["idempotence"] = max(
            worst["idempotence"], float(np.linalg.norm(project(K, p) - p)) / (1.0 + nz))
        alpha = 10.0 ** rng.uniform(-2.0, 2.0)
        worst["homogeneity"] = max(
            worst["homogeneity"],
            float(np.linalg.norm(project(K, alpha * z) - alpha * p)) / (1.0 + alpha * nz))

        z2 = Z[(i + 1) % len(Z)]
        excess = float(np.linalg.norm(project(K, z2) - p)) - float(np.linalg.norm(z2 - z))
        worst["lipschitz"] = max(worst["lipschitz"], excess / (1.0 + nz))

    worst["gradient"], n_grad = penalty_gradient_check(K, grad_samples, rng)

    return {
        "cone": repr(K),
        "samples": int(samples),
        "gradient_samples": n_grad,
        "max_residuals": worst,
        "tolerances": dict(CONE_TOLERANCES),
        "pass": all(worst[key] <= tol for key, tol in CONE_TOLERANCES.items()),
    }


def polar_samples(K: Cone, rng, size):
    """Random members of the polar cone (all zero/nonpos/Lorentz/PSD polars are -K or R^d)."""
    if isinstance(K, Zero):
        return rng.standard_normal((size, K.dim)) * 3.0
    if isinstance(K, Product):
        return np.hstack([polar_samples(c, rng, size) for c in K.parts])
    return -K.sample(rng, size)


# ---------------------------------------------------------------------------
# expressions


def random_expression(rng, n, depth=4) -> ex.Expr:
    """Random smooth expression that stays in-domain on all of R^n."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return ex.Var(int(rng.integers(1, n + 1)))
        return ex.Const(float(round(rng.uniform(0.1, 3.0), 3)))
    sub = lambda: random_expression(rng, n, depth - 1)  # noqa: E731
    kind = rng.integers(0, 11)
    if kind <= 3:
        return ex.BinOp("+-*"[kind % 3], sub(), sub())
    if kind == 4:
        denom = ex.BinOp("+", ex.Const(1.0), ex.BinOp("^", sub(), ex.Const(2.0)))
        return ex.BinOp("/", sub(), denom)
    if kind == 5:
        return ex.BinOp("^", sub(), ex.Const(float(rng.integers(2, 4))))
    if kind == 6:
        return ex.Neg(sub())
    if kind == 7:
        return ex.Call(str(rng.choice(["sin", "cos"])), sub())
    if kind == 8:
        return ex.Call("exp", ex.Call("sin", sub()))
    if kind == 9:
        inner = ex.BinOp("+", ex.Const(0.5), ex.BinOp("^", sub(), ex.Const(2.0)))
        return ex.Call(str(rng.choice(["log", "sqrt"])), inner)
    # variable exponent on a positive base
    return ex.BinOp("^", ex.Const(1.5), ex.Call("cos", sub()))


def grad_battery(samples=1000, seed=0, max_dim=4, depth=4, max_value=1e3):
    """Compare dual-number gradients with central differences on random expressions.

    The error for one sample is ``||g_fd - g|| / max(||g||, 1)``. Expressions
    whose value at the drawn point exceeds ``max_value`` in magnitude are
    redrawn, since central differences lose accuracy there.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_case = None
    done = 0
    redrawn = 0
    roundtrip_failures = 0
    while done < samples:
        n = int(rng.integers(1, max_dim + 1))
        e = random_expression(rng, n, depth)
        x = rng.uniform(-1.5, 1.5, n)
        try:
            v = ex.evaluate(e, x)
        except ex.ExprDomainError:
            redrawn += 1
            continue
        if not math.isfinite(v) or abs(v) > max_value:
            redrawn += 1
            continue
        text = ex.to_text(e)
        if ex.parse(text, n) != e:
            roundtrip_failures += 1
        g = ex.grad(e, x)
        fd = fd_gradient(lambda z: ex.evaluate(e, z), x)
        err = float(np.linalg.norm(fd - g)) / max(float(np.linalg.norm(g)), 1.0)
        if err > worst:
            worst, worst_case = err, {"expr": text, "x": x.tolist()}
        done += 1
    return {
        "samples": samples,
        "redrawn": redrawn,
        "max_rel_error": worst,
        "worst_case": worst_case,
        "roundtrip_failures": roundtrip_failures,
        "tolerance": GRAD_TOLERANCE,
        "pass": worst <= GRAD_TOLERANCE and roundtrip_failures == 0,
    }
