"""Closed convex cones, their projections, and the Moreau decomposition.

Every cone lives in a coordinate space R^d. The PSD cone of order ``s`` is
embedded through ``svec``: the lower triangle taken column by column, with
off-diagonal entries scaled by sqrt(2) so that ``svec(A) @ svec(B)`` equals
``trace(A @ B)``.

Only the projection onto the cone itself is implemented per variant. The
projection onto the polar cone is always the complement ``z - project(K, z)``.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Cone", "Zero", "Nonpos", "Lorentz", "Psd", "Product",
    "ConeError", "EigenError", "EigenPair",
    "svec", "smat", "eigen_sym",
    "project", "project_polar", "dist_to_cone", "dist_to_polar", "membership",
    "moreau_check", "penalty_value", "penalty_grad_chain",
    "cone_from_json", "cone_to_json", "parse_cone",
]

SQRT2 = math.sqrt(2.0)
# ||z2|| <= -z1 + LORENTZ_ZERO_TOL sends z to the origin
LORENTZ_ZERO_TOL = 1e-14


class ConeError(ValueError):
    """Bad cone descriptor or dimension mismatch."""


class EigenError(ArithmeticError):
    """Jacobi iteration failed to converge."""


class Cone:
    """Base class. Subclasses set ``dim`` and implement ``_project``."""

    dim: int

    def _project(self, z):
        raise NotImplementedError

    def sample(self, rng, size):
        """Draw ``size`` random members of the cone as rows of an array."""
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Cone):
    """The cone {0} in R^d; its polar is all of R^d."""

    dim: int

    def _project(self, z):
        return np.zeros_like(z)

    def sample(self, rng, size):
        return np.zeros((size, self.dim))


@dataclass(frozen=True)
class Nonpos(Cone):
    """The nonpositive orthant -R^d_+."""

    dim: int

    def _project(self, z):
        return np.minimum(z, 0.0)

    def sample(self, rng, size):
        c = -np.abs(rng.standard_normal((size, self.dim)))
        # put some members on the boundary
        c[rng.random((size, self.dim)) < 0.2] = 0.0
        return c


@dataclass(frozen=True)
class Lorentz(Cone):
    """Second-order cone {x : x1 >= ||(x2, ..., xd)||}; d = 1 gives {x1 >= 0}."""

    dim: int

    def _project(self, z):
        t = z[0]
        r = float(np.linalg.norm(z[1:]))
        if r <= t:
            return z.copy()
        if r <= -t + LORENTZ_ZERO_TOL:
            return np.zeros_like(z)
        a = 0.5 * (t + r)
        out = np.empty_like(z)
        out[0] = a
        out[1:] = (a / r) * z[1:]
        return out

    def sample(self, rng, size):
        u = rng.standard_normal((size, self.dim - 1))
        t = np.linalg.norm(u, axis=1)
        extra = np.abs(rng.standard_normal(size))
        extra[rng.random(size) < 0.3] = 0.0
        return np.column_stack([t + extra, u])


@dataclass(frozen=True)
class Psd(Cone):
    """Positive semidefinite matrices of order ``order``, in svec coordinates."""

    order: int

    @property
    def dim(self):
        return self.order * (self.order + 1) // 2

    def _project(self, z):
        pair = eigen_sym(smat(z, self.order))
        lam = pair.values
        if lam[-1] >= 0.0:
            return z.copy()
        if lam[0] <= 0.0:
            return np.zeros_like(z)
        Q = pair.vectors
        return svec((Q * np.maximum(lam, 0.0)) @ Q.T)

    def sample(self, rng, size):
        s = self.order
        B = rng.standard_normal((size, s, s))
        # random rank so that boundary members show up too
        rank = rng.integers(0, s + 1, size)
        B[np.arange(s)[None, :] >= rank[:, None]] = 0.0
        return svec(B @ np.swapaxes(B, 1, 2))


@dataclass(frozen=True)
class Product(Cone):
    """Cartesian product; coordinates are the parts' coordinates concatenated."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self):
        return sum(p.dim for p in self.parts)

    def blocks(self):
        start = 0
        for p in self.parts:
            yield p, slice(start, start + p.dim)
            start += p.dim

    def _project(self, z):
        out = np.empty_like(z)
        for p, sl in self.blocks():
            out[sl] = p._project(z[sl])
        return out

    def sample(self, rng, size):
        if not self.parts:
            return np.zeros((size, 0))
        return np.hstack([p.sample(rng, size) for p in self.parts])


# ---------------------------------------------------------------------------
# symmetric matrices


@functools.lru_cache(maxsize=None)
def _tril_index(s):
    # column-major lower triangle: (0,0), (1,0), ..., (s-1,0), (1,1), ...
    rows, cols = [], []
    for j in range(s):
        for i in range(j, s):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows, dtype=int)
    cols = np.array(cols, dtype=int)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return rows, cols, scale


def svec(A) -> np.ndarray:
    """svec of a symmetric matrix, or of a stack of them along the leading axes."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ConeError(f"svec expects square matrices, got shape {A.shape}")
    rows, cols, scale = _tril_index(A.shape[-1])
    return A[..., rows, cols] * scale


def smat(v, order=None) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if order is None:
        order = int(round((math.sqrt(8 * v.size + 1) - 1) / 2))
    if v.size != order * (order + 1) // 2:
        raise ConeError(f"svec length {v.size} does not match order {order}")
    rows, cols, scale = _tril_index(order)
    A = np.empty((order, order))
    A[rows, cols] = v / scale
    A[cols, rows] = v / scale
    return A


@functools.lru_cache(maxsize=None)
def _triu_index(s):
    return np.triu_indices(s, 1)


class EigenPair(NamedTuple):
    """Eigenvalues in descending order and matching orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def eigen_sym(A, tol=1e-12, max_sweeps=None) -> EigenPair:
    """Eigen-decompose a symmetric matrix with cyclic Jacobi rotations.

    Sweeps continue until the largest off-diagonal magnitude is at most
    ``tol * ||A||_F``. Raises :class:`EigenError` after ``max_sweeps``
    (default ``30 * s**2``).
    """
    a = np.array(A, dtype=float)
    s = a.shape[0]
    if a.shape != (s, s):
        raise ConeError(f"eigen_sym expects a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    V = np.eye(s)
    if s <= 1:
        return EigenPair(np.diag(a).copy(), V)
    if max_sweeps is None:
        max_sweeps = 30 * s * s
    thresh = tol * np.linalg.norm(a)
    iu = _triu_index(s)

    for _ in range(max_sweeps):
        off = np.max(np.abs(a[iu]))
        if off <= thresh:
            break
        for p in range(s - 1):
            for q in range(p + 1, s):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) + 100.0 * abs(apq) == abs(diff):
                    # tiny angle; theta**2 would overflow
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                # a <- R^T a R with R the (p, q) plane rotation
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - sn * vq
                V[:, q] = sn * vp + c * vq
    else:
        off = np.max(np.abs(a[iu]))
        if off > thresh:
            raise EigenError(
                f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal {off:.3e})")

    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return EigenPair(lam[order], V[:, order])


# ---------------------------------------------------------------------------
# projections


def _vec(K, z):
    z = np.asarray(z, dtype=float).ravel()
    if z.size != K.dim:
        raise ConeError(f"vector of dimension {z.size} does not match cone dimension {K.dim}")
    return z


def project(K: Cone, z) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``K``."""
    return K._project(_vec(K, z))


def project_polar(K: Cone, z) -> np.ndarray:
    """Projection onto the polar cone, as ``z - project(K, z)``."""
    z = _vec(K, z)
    return z - K._project(z)


def dist_to_cone(K: Cone, z) -> float:
    return float(np.linalg.norm(project_polar(K, z)))


def dist_to_polar(K: Cone, w) -> float:
    """Distance from ``w`` to the polar cone, which is ``||project(K, w)||``."""
    return float(np.linalg.norm(project(K, w)))


def membership(K: Cone, z, tol=0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return dist_to_cone(K, z) <= tol


def moreau_check(K: Cone, z):
    """Residuals of z = P_K(z) + P_polar(z) and of the orthogonality of the two parts."""
    z = _vec(K, z)
    p = K._project(z)
    w = z - p
    recon = float(np.linalg.norm(z - p - w))
    orth = abs(float(p @ w))
    return recon, orth


def penalty_value(K: Cone, hx) -> float:
    """Squared distance of ``hx`` to ``K``."""
    w = project_polar(K, hx)
    return float(w @ w)


def penalty_grad_chain(K: Cone, hx, Jh) -> np.ndarray:
    """Gradient of ``x -> penalty_value(K, h(x))`` given ``h(x)`` and its Jacobian.

    The gradient of the squared distance at ``z`` is ``2 * project_polar(K, z)``.
    """
    w = project_polar(K, hx)
    Jh = np.asarray(Jh, dtype=float)
    if Jh.ndim != 2 or Jh.shape[0] != w.size:
        raise ConeError(f"Jacobian shape {Jh.shape} does not match cone dimension {w.size}")
    return Jh.T @ (2.0 * w)


# ---------------------------------------------------------------------------
# descriptors

_SIMPLE = {"zero": Zero, "nonpos": Nonpos, "lorentz": Lorentz}


def cone_from_json(d) -> Cone:
    """Build a cone from its JSON descriptor (a dict or a JSON string)."""
    if isinstance(d, str):
        d = json.loads(d)
    if not isinstance(d, dict) or "type" not in d:
        raise ConeError(f"cone descriptor must be an object with a 'type' field: {d!r}")
    kind = d["type"]
    if kind in _SIMPLE:
        dim = d.get("dim")
        if not isinstance(dim, int) or dim < 0:
            raise ConeError(f"{kind} cone needs a nonnegative integer 'dim', got {dim!r}")
        if kind == "lorentz" and dim < 1:
            raise ConeError("lorentz cone needs dim >= 1")
        return _SIMPLE[kind](dim)
    if kind == "psd":
        s = d.get("order")
        if not isinstance(s, int) or s < 1:
            raise ConeError(f"psd cone needs a positive integer 'order', got {s!r}")
        K = Psd(s)
    elif kind == "product":
        parts = d.get("parts")
        if not isinstance(parts, list):
            raise ConeError("product cone needs a 'parts' list")
        K = Product(tuple(cone_from_json(p) for p in parts))
    else:
        raise ConeError(f"unknown cone type {kind!r}")
    if "dim" in d and d["dim"] != K.dim:
        raise ConeError(f"{kind} cone: declared dim {d['dim']} but embedded dim is {K.dim}")
    return K


def cone_to_json(K: Cone) -> dict:
    if isinstance(K, Product):
        return {"type": "product", "dim": K.dim, "parts": [cone_to_json(p) for p in K.parts]}
    if isinstance(K, Psd):
        return {"type": "psd", "dim": K.dim, "order": K.order}
    name = {Zero: "zero", Nonpos: "nonpos", Lorentz: "lorentz"}[type(K)]
    return {"type": name, "dim": K.dim}


def parse_cone(text: str) -> Cone:
    """Parse a command-line cone spec.

    Accepts a JSON descriptor, ``type:n`` (``psd:s`` takes the matrix order),
    or a comma-separated list of those, which builds a product.
    """
    text = text.strip()
    if text.startswith("{"):
        try:
            return cone_from_json(text)
        except json.JSONDecodeError as exc:
            raise ConeError(f"bad cone JSON: {exc}") from None
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConeError("empty cone spec")
    cones: list[Cone] = []
    for item in items:
        kind, _, num = item.partition(":")
        try:
            n = int(num)
        except ValueError:
            raise ConeError(f"bad cone spec {item!r}; expected type:n") from None
        if kind == "psd":
            cones.append(cone_from_json({"type": "psd", "order": n}))
        else:
            cones.append(cone_from_json({"type": kind, "dim": n}))
    return cones[0] if len(cones) == 1 else Product(tuple(cones))


def product(parts: Sequence[Cone]) -> Product:
    return Product(tuple(parts))
