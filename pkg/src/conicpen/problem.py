"""Problem container and the JSON problem-file format.

A problem file looks like::

    {
      "name": "eq-circle",
      "n": 2,
      "objective": "x1 + x2",
      "constraints": ["x1^2 + x2^2 - 2"],
      "cone": {"type": "zero", "dim": 1},
      "known_solution": [-1, -1],
      "known_multiplier": [0.5],
      "x0": [0, 0],
      "delta": 0.5
    }

Constraint ``i`` is coordinate ``i`` of h(x); for a PSD block the
coordinates are in svec order (column-major lower triangle, off-diagonals
scaled by sqrt(2)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import expr as ex
from .cones import Cone, ConeError, cone_from_json, cone_to_json, dist_to_cone

FEASIBILITY_TOL = 1e-8


class ProblemError(ValueError):
    """Malformed or inconsistent problem definition."""


@dataclass(frozen=True)
class Problem:
    """Minimize ``objective(x)`` subject to ``h(x)`` in ``cone``."""

    n: int
    objective: ex.Expr
    constraints: tuple
    cone: Cone
    known_solution: Optional[np.ndarray] = None
    known_multiplier: Optional[np.ndarray] = None
    name: str = ""
    x0: Optional[np.ndarray] = None
    delta: Optional[float] = None
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(self.constraints) != self.cone.dim:
            raise ProblemError(
                f"{len(self.constraints)} constraint expressions but cone dimension is "
                f"{self.cone.dim}")
        for name in ("known_solution", "known_multiplier", "x0"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float).ravel())
        if self.known_solution is not None:
            self._check_point(self.known_solution, "known_solution")
            d = dist_to_cone(self.cone, self.h(self.known_solution))
            if d > FEASIBILITY_TOL:
                raise ProblemError(f"known_solution is infeasible: dist(h(x), K) = {d:.3e}")
        if self.known_multiplier is not None and self.known_multiplier.size != self.m:
            raise ProblemError(
                f"known_multiplier has dimension {self.known_multiplier.size}, expected {self.m}")
        if self.x0 is not None:
            self._check_point(self.x0, "x0")

    def _check_point(self, x, what):
        if x.size != self.n:
            raise ProblemError(f"{what} has dimension {x.size}, expected {self.n}")

    @property
    def m(self):
        return self.cone.dim

    def f(self, x):
        return ex.evaluate(self.objective, x)

    def grad_f(self, x):
        return ex.grad(self.objective, x)

    def h(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([ex.evaluate(c, x) for c in self.constraints])

    def jac_h(self, x):
        x = np.asarray(x, dtype=float)
        if not self.constraints:
            return np.zeros((0, x.size))
        return ex.jacobian(self.constraints, x)

    def point(self, x, what="point"):
        x = np.asarray(x, dtype=float).ravel()
        self._check_point(x, what)
        return x

    def to_json(self):
        return {
            "name": self.name,
            "n": self.n,
            "objective": ex.to_text(self.objective),
            "constraints": [ex.to_text(c) for c in self.constraints],
            "cone": cone_to_json(self.cone),
        }


def _vector(d, key):
    v = d.get(key)
    if v is None:
        return None
    if not isinstance(v, list) or not all(isinstance(t, (int, float)) for t in v):
        raise ProblemError(f"'{key}' must be a list of numbers")
    return v


def problem_from_dict(d: dict) -> Problem:
    if not isinstance(d, dict):
        raise ProblemError("problem file must contain a JSON object")
    for key in ("n", "objective", "constraints", "cone"):
        if key not in d:
            raise ProblemError(f"missing field '{key}'")
    n = d["n"]
    if not isinstance(n, int) or n < 1:
        raise ProblemError(f"'n' must be a positive integer, got {n!r}")
    if not isinstance(d["constraints"], list):
        raise ProblemError("'constraints' must be a list of expression strings")
    try:
        cone = cone_from_json(d["cone"])
    except ConeError as exc:
        raise ProblemError(f"cone: {exc}") from None
    try:
        objective = ex.parse(d["objective"], n)
    except ex.ExprSyntaxError as exc:
        raise ProblemError(f"objective: {exc}") from None
    constraints = []
    for i, text in enumerate(d["constraints"]):
        try:
            constraints.append(ex.parse(text, n))
        except ex.ExprSyntaxError as exc:
            raise ProblemError(f"constraints[{i}]: {exc}") from None
    delta = d.get("delta")
    if delta is not None and not (isinstance(delta, (int, float)) and delta > 0):
        raise ProblemError("'delta' must be a positive number")
    return Problem(
        n=n,
        objective=objective,
        constraints=tuple(constraints),
        cone=cone,
        known_solution=_vector(d, "known_solution"),
        known_multiplier=_vector(d, "known_multiplier"),
        name=d.get("name", ""),
        x0=_vector(d, "x0"),
        delta=delta,
        source=d,
    )


def registry_names():
    root = resources.files("conicpen") / "problems"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def registry_path(name: str):
    return resources.files("conicpen") / "problems" / f"{name}.json"


def resolve_problem_path(path) -> Path:
    """Return ``path`` if it exists, else the bundled problem with that stem."""
    p = Path(path)
    if p.is_file():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if p.parent == Path(".") and stem in registry_names():
        return Path(str(registry_path(stem)))
    raise FileNotFoundError(f"file not found: {path}")


def load_problem(path) -> Problem:
    p = resolve_problem_path(path)
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{p}: invalid JSON at offset {exc.pos}: {exc.msg}") from None
    return problem_from_dict(d)


def load_registry(name: str) -> Problem:
    return problem_from_dict(json.loads(registry_path(name).read_text()))
