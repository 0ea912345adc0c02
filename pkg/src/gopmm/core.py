"""Problem data model, objective, feasibility checks and synthetic instances.

Samples are the columns of ``y`` (M x N) and of ``theta`` (K x N); the
subtype matrix ``x`` is M x K.  Whenever ``x`` is flattened it is stacked
column by column (Fortran order), so entry ``x[j, k]`` lives at ``k*M + j``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEAS_TOL = 1e-8


class ContractViolation(ValueError):
    """Raised when inputs break an operation's preconditions."""


class UnsupportedSizeError(ValueError):
    """Raised for instance sizes the synthetic generator cannot build."""


@dataclass(frozen=True)
class ProblemInstance:
    y: np.ndarray
    K: int
    P: float
    epsilon: float = 0.01
    seed: int = 0

    def __post_init__(self):
        y = np.array(self.y, dtype=float, copy=True)
        if y.ndim == 1:
            y = y.reshape(1, -1)
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise ContractViolation(f"y must be a non-empty M x N matrix, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise ContractViolation("y contains non-finite entries")
        if int(self.K) < 1:
            raise ContractViolation("K must be >= 1")
        if not self.P > 0:
            raise ContractViolation("P must be > 0")
        if not self.epsilon > 0:
            raise ContractViolation("epsilon must be > 0")
        if int(self.seed) < 0:
            raise ContractViolation("seed must be unsigned")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "P", float(self.P))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def M(self) -> int:
        return self.y.shape[0]

    @property
    def N(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class FactorPair:
    x: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        theta = np.array(self.theta, dtype=float, copy=True)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if theta.ndim == 1:
            theta = theta.reshape(-1, 1)
        if x.ndim != 2 or theta.ndim != 2:
            raise ContractViolation("x and theta must be matrices")
        if x.shape[1] != theta.shape[0]:
            raise ContractViolation(
                f"x is {x.shape[0]}x{x.shape[1]} but theta has {theta.shape[0]} rows")
        x.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", theta)

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "theta": self.theta.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "FactorPair":
        return cls(x=np.asarray(doc["x"], dtype=float), theta=np.asarray(doc["theta"], dtype=float))


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the branch-and-bound driver and its subproblem solvers."""

    epsilon: float = 0.01
    max_iterations: int = 10_000
    max_wall_seconds: float = math.inf
    workers: int = 1
    dedup_tau: float = 1e-9
    zero_tau: float = 1e-12
    interior_tau: float = 1e-8
    lp_tol: float = 1e-7
    qp_tol: float = 1e-7
    seed: int = 0
    fathom: bool = True

    def __post_init__(self):
        for name in ("epsilon", "dedup_tau", "zero_tau", "interior_tau", "lp_tol", "qp_tol"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be > 0")
        if self.workers < 1:
            raise ContractViolation("workers must be >= 1")
        if self.max_iterations < 0:
            raise ContractViolation("max_iterations must be >= 0")
        if not self.max_wall_seconds > 0:
            raise ContractViolation("max_wall_seconds must be > 0")


@dataclass
class FeasibilityReport:
    feasible: bool
    violations: list[tuple[str, float]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.feasible


def objective(instance: ProblemInstance, pair: FactorPair) -> float:
    """Sum over samples of ``||y_i - x theta_i||^2``."""
    x, theta = pair.x, pair.theta
    if x.shape[0] != instance.M or theta.shape[1] != instance.N or x.shape[1] != theta.shape[0]:
        raise ContractViolation(
            f"dimension mismatch: y {instance.y.shape}, x {x.shape}, theta {theta.shape}")
    r = instance.y - x @ theta
    return float(np.sum(r * r))


def check_feasible(pair: FactorPair, P: float, tol: float = FEAS_TOL) -> FeasibilityReport:
    violations: list[tuple[str, float]] = []
    theta = pair.theta
    for i in range(theta.shape[1]):
        col = theta[:, i]
        neg = -float(col.min())
        if neg > tol:
            violations.append((f"theta[:, {i}] nonnegativity", neg))
        dev = abs(float(col.sum()) - 1.0)
        if dev > tol:
            violations.append((f"theta[:, {i}] simplex sum", dev))
    excess = float(np.abs(pair.x).sum()) - P
    if excess > tol:
        violations.append(("l1 budget", excess))
    return FeasibilityReport(feasible=not violations, violations=violations)


def _box_muller(rng: np.random.Generator, n: int) -> np.ndarray:
    out = np.empty(n)
    for s in range(0, n, 2):
        u1, u2 = rng.random(2)
        r = math.sqrt(-2.0 * math.log1p(-u1))
        out[s] = r * math.cos(2.0 * math.pi * u2)
        if s + 1 < n:
            out[s + 1] = r * math.sin(2.0 * math.pi * u2)
    return out


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate_instance(M: int, N: int, seed: int = 0, P: float | None = None,
                      epsilon: float = 0.01) -> tuple[ProblemInstance, FactorPair]:
    """Build the two-subtype synthetic data set with a known exact factorization.

    Rows ``m < M/4`` load on subtype 0 with weight 1, rows ``M/4 <= m < M/2``
    load on subtype 1 with weight -1, and the bottom half is Gaussian noise
    with standard deviation 0.5 on both subtypes.  Memberships sweep linearly
    from subtype 1 to subtype 0 across the samples.  ``P`` defaults to the
    l1 norm of the true ``x``.
    """
    if M < 4:
        raise UnsupportedSizeError("M must be ≥ 4")
    if N < 1:
        raise UnsupportedSizeError("N must be >= 1")
    K = 2
    rng = make_rng(seed)
    x = np.zeros((M, K))
    for m in range(M):
        if 4 * m < M:
            x[m, 0] = 1.0
        elif 2 * m < M:
            x[m, 1] = -1.0
    lower = [m for m in range(M) if 2 * m >= M]
    x[lower, :] = 0.5 * _box_muller(rng, len(lower) * K).reshape(len(lower), K)
    theta = np.empty((K, N))
    theta[0] = np.linspace(0.0, 1.0, N)
    theta[1] = 1.0 - theta[0]
    y = x @ theta
    if P is None:
        P = float(np.abs(x).sum())
    return ProblemInstance(y=y, K=K, P=P, epsilon=epsilon, seed=seed), FactorPair(x=x, theta=theta)


def read_matrix_csv(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ContractViolation(f"{path}:{lineno}: {exc}") from None
            if rows and len(vals) != len(rows[0]):
                raise ContractViolation(f"{path}:{lineno}: ragged row")
            rows.append(vals)
    if not rows:
        raise ContractViolation(f"{path}: empty matrix")
    out = np.array(rows, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ContractViolation(f"{path}: non-finite entries")
    return out


def write_matrix_csv(path: str | Path, mat: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for row in mat:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_pair_json(path: str | Path, pair: FactorPair) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pair.to_json(), fh, sort_keys=True)
        fh.write("\n")


def read_pair_json(path: str | Path) -> FactorPair:
    with open(path, encoding="utf-8") as fh:
        return FactorPair.from_json(json.load(fh))
