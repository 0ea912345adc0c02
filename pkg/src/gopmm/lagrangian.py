"""Lagrangian of the primal problem, its two-stage linearization, and the
relaxed dual LP assembled from the cut data along a branch-and-bound path.

Affine functions of ``x`` are carried as ``(coef, const)`` with ``coef``
indexed by the column-stacked ``x`` (entry ``x[j, k]`` at ``k*M + j``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .convex_solvers import LinearProgram, PrimalSolution
from .core import ContractViolation


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stack an M x K matrix."""
    return np.asarray(x, dtype=float).ravel(order="F")


def unvec(xbar: np.ndarray, M: int, K: int) -> np.ndarray:
    return np.asarray(xbar, dtype=float).reshape((M, K), order="F")


@dataclass(frozen=True)
class AffineForm:
    coef: np.ndarray
    const: float

    def __call__(self, x: np.ndarray) -> float:
        return float(self.coef @ vec(x) + self.const)


def lagrangian_value(y_i, theta_i, x, lambda_i, mu_i) -> float:
    """``||y_i - x theta_i||^2 - lambda_i (1' theta_i - 1) - mu_i' theta_i``."""
    y_i = np.asarray(y_i, dtype=float)
    theta_i = np.asarray(theta_i, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu_i = np.asarray(mu_i, dtype=float)
    if x.shape != (y_i.size, theta_i.size) or mu_i.size != theta_i.size:
        raise ContractViolation("dimension mismatch in lagrangian_value")
    xt = x @ theta_i
    return float(y_i @ y_i - 2.0 * y_i @ xt + xt @ xt
                 - lambda_i * (theta_i.sum() - 1.0) - mu_i @ theta_i)


def linearize_in_x(y_i, theta_i, x_t, lambda_i, mu_i) -> Callable[[np.ndarray, np.ndarray], float]:
    """First-order expansion of the Lagrangian in ``x`` about ``x_t``.

    The result is still a function of both ``x`` and ``theta``: it is
    bilinear in the pair, and evaluating it at ``theta_i`` reproduces the
    expansion used to build the qualifying constraints.  The ``theta``
    argument defaults to the ``theta_i`` the expansion was built with.
    """
    y_i = np.asarray(y_i, dtype=float)
    x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
    mu_i = np.asarray(mu_i, dtype=float)
    theta_default = np.asarray(theta_i, dtype=float)
    yy = float(y_i @ y_i)
    G_t = x_t.T @ x_t

    def form(x, theta=None):
        th = theta_default if theta is None else np.asarray(theta, dtype=float)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return float(yy - th @ G_t @ th - 2.0 * y_i @ x @ th + 2.0 * th @ x_t.T @ x @ th
                     - lambda_i * (th.sum() - 1.0) - mu_i @ th)

    return form


def _qc_sample(y_i, theta_t_i, x_t, lambda_i, mu_i) -> tuple[np.ndarray, np.ndarray]:
    """Qualifying constraints of one sample as ``(K, MK)`` coefficients and ``(K,)`` offsets.

    Row ``k`` is the ``theta_k`` component of
    ``-2 x_t'x_t th - 2 x'y + 2 (x_t'x + x'x_t) th - lambda 1 - mu``.
    """
    M, K = x_t.shape
    w = x_t @ theta_t_i
    coef = np.empty((K, M * K))
    for k in range(K):
        Gk = 2.0 * np.outer(x_t[:, k], theta_t_i)
        Gk[:, k] += 2.0 * (w - y_i)
        coef[k] = Gk.ravel(order="F")
    offset = -2.0 * (x_t.T @ w) - lambda_i - mu_i
    return coef, offset


@dataclass(frozen=True)
class NodeCutData:
    """Everything a node's primal solve contributes to its descendants' LPs.

    ``qc_coef[i*K + k]`` / ``qc_offset[i*K + k]`` hold qualifying constraint
    ``(k, i)``; the same ``i*K + k`` ordering indexes region labels.
    ``cut_base`` is the theta-free part of the summed linearized Lagrangian,
    so the node's cut for a label ``b`` is
    ``cut_base + sum_ki b_ki * g_ki(x)``.
    """

    x_t: np.ndarray
    theta_t: np.ndarray
    lambda_t: np.ndarray
    mu_t: np.ndarray
    qc_coef: np.ndarray
    qc_offset: np.ndarray
    cut_base: AffineForm

    @property
    def M(self) -> int:
        return self.x_t.shape[0]

    @property
    def K(self) -> int:
        return self.x_t.shape[1]

    @property
    def N(self) -> int:
        return self.theta_t.shape[1]

    def qc_values(self, x: np.ndarray) -> np.ndarray:
        return self.qc_coef @ vec(x) + self.qc_offset

    def cut(self, theta_b: np.ndarray) -> AffineForm:
        b = np.asarray(theta_b, dtype=float).ravel()
        return AffineForm(self.cut_base.coef + b @ self.qc_coef,
                          self.cut_base.const + float(b @ self.qc_offset))

    def hyperplanes(self) -> np.ndarray:
        """Rows ``(a..., b)`` of the KN qualifying constraints ``a'x + b``."""
        return np.column_stack([self.qc_coef, self.qc_offset])


def qualifying_constraints(y, theta_t, x_t, lambda_t, mu_t) -> tuple[np.ndarray, np.ndarray]:
    """All KN qualifying constraints, ordered sample-major (``i*K + k``)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
    theta_t = np.asarray(theta_t, dtype=float).reshape(x_t.shape[1], -1)
    mu_t = np.asarray(mu_t, dtype=float).reshape(theta_t.shape)
    lambda_t = np.asarray(lambda_t, dtype=float).ravel()
    coefs, offsets = [], []
    for i in range(theta_t.shape[1]):
        c, o = _qc_sample(y[:, i], theta_t[:, i], x_t, lambda_t[i], mu_t[:, i])
        coefs.append(c)
        offsets.append(o)
    return np.vstack(coefs), np.concatenate(offsets)


def _cut_base_sample(y_i, theta_t_i, x_t, lambda_i) -> tuple[np.ndarray, float]:
    # y'y + th'x_t'x_t th + lambda - 2 th'x'x_t th ; the last term is linear in x
    w = x_t @ theta_t_i
    coef = (-2.0 * np.outer(w, theta_t_i)).ravel(order="F")
    return coef, float(y_i @ y_i + w @ w + lambda_i)


def build_cut_data(y, x_t, primal: PrimalSolution) -> NodeCutData:
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x_t = np.array(x_t, dtype=float)
    qc_coef, qc_offset = qualifying_constraints(y, primal.theta, x_t, primal.lam, primal.mu)
    M, K = x_t.shape
    coef = np.zeros(M * K)
    const = 0.0
    for i in range(y.shape[1]):
        c, k0 = _cut_base_sample(y[:, i], primal.theta[:, i], x_t, primal.lam[i])
        coef += c
        const += k0
    return NodeCutData(x_t=x_t, theta_t=np.array(primal.theta), lambda_t=np.array(primal.lam),
                       mu_t=np.array(primal.mu), qc_coef=qc_coef, qc_offset=qc_offset,
                       cut_base=AffineForm(coef, const))


def linearize_in_x_theta(y_i, theta_b_i, node: NodeCutData, i: int) -> AffineForm:
    """Per-sample linearized Lagrangian with ``theta_i`` fixed at the 0/1 vertex ``theta_b_i``."""
    b = np.asarray(theta_b_i, dtype=float).ravel()
    if b.size != node.K or np.any((b != 0.0) & (b != 1.0)):
        raise ContractViolation("theta_b_i must be a 0/1 vector of length K")
    y_i = np.asarray(y_i, dtype=float)
    coef, const = _cut_base_sample(y_i, node.theta_t[:, i], node.x_t, node.lambda_t[i])
    rows = slice(i * node.K, (i + 1) * node.K)
    return AffineForm(coef + b @ node.qc_coef[rows], const + float(b @ node.qc_offset[rows]))


def region_rows(path: Sequence[tuple[NodeCutData, np.ndarray]], zero_tau: float = 1e-12
                ) -> tuple[np.ndarray, np.ndarray]:
    """Sign-restricted qualifying constraints of a path as rows ``C x + e <= 0``.

    Rows are scaled to unit coefficient norm; rows with a vanishing
    coefficient vector are dropped.
    """
    C: list[np.ndarray] = []
    e: list[np.ndarray] = []
    for cut_data, label in path:
        sign = np.where(np.asarray(label).ravel() == 1, 1.0, -1.0)
        norms = np.linalg.norm(cut_data.qc_coef, axis=1)
        keep = norms > zero_tau
        C.append(sign[keep, None] * cut_data.qc_coef[keep] / norms[keep, None])
        e.append(sign[keep] * cut_data.qc_offset[keep] / norms[keep])
    if not C:
        return np.zeros((0, 0)), np.zeros(0)
    return np.vstack(C), np.concatenate(e)


@dataclass(frozen=True)
class RelaxedDualLP:
    """LP over ``(Q, x, z)``; ``x`` and ``z`` column-stacked, 2MK+1 variables."""

    lp: LinearProgram
    M: int
    K: int

    @property
    def n_vars(self) -> int:
        return self.lp.n

    def split(self, v: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        d = self.M * self.K
        return float(v[0]), unvec(v[1:1 + d], self.M, self.K), unvec(v[1 + d:], self.M, self.K)


def assemble_relaxed_dual(path: Sequence[tuple[NodeCutData, np.ndarray]], P: float,
                          zero_tau: float = 1e-12) -> RelaxedDualLP:
    """Relaxed dual LP for the last node of ``path``.

    ``path`` lists, root to child inclusive, each visited node's cut data
    paired with the region label (length KN, 0/1) its child on the path
    carries.  Label entry 1 asks ``g <= 0``, entry 0 asks ``g >= 0``.
    Qualifying constraints whose coefficients and offset are all below
    ``zero_tau`` are tautologies and are skipped.
    """
    if not path:
        raise ContractViolation("relaxed dual needs a non-empty path")
    M, K = path[0][0].M, path[0][0].K
    d = M * K
    n = 2 * d + 1
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    budget = np.zeros(n)
    budget[1 + d:] = 1.0
    rows.append(budget)
    rhs.append(P)
    eye = np.eye(d)
    abs_rows = np.zeros((2 * d, n))
    abs_rows[:d, 1:1 + d] = eye
    abs_rows[:d, 1 + d:] = -eye
    abs_rows[d:, 1:1 + d] = -eye
    abs_rows[d:, 1 + d:] = -eye
    rows.extend(abs_rows)
    rhs.extend([0.0] * (2 * d))

    for cut_data, label in path:
        label = np.asarray(label).ravel()
        if label.size != cut_data.qc_coef.shape[0]:
            raise ContractViolation("region label length must equal KN")
        cut = cut_data.cut(label)
        row = np.zeros(n)
        row[0] = -1.0
        row[1:1 + d] = cut.coef
        rows.append(row)
        rhs.append(-cut.const)
        keep = np.maximum(np.abs(cut_data.qc_coef).max(axis=1), np.abs(cut_data.qc_offset)) > zero_tau
        sign = np.where(label == 1, 1.0, -1.0)[keep]
        qc = np.zeros((int(keep.sum()), n))
        qc[:, 1:1 + d] = sign[:, None] * cut_data.qc_coef[keep]
        rows.extend(qc)
        rhs.extend(-sign * cut_data.qc_offset[keep])

    c = np.zeros(n)
    c[0] = 1.0
    lb = np.concatenate([[-np.inf], np.full(d, -P), np.zeros(d)])
    ub = np.full(n, np.inf)
    names = ["Q"] + [f"x[{j},{k}]" for k in range(K) for j in range(M)] \
        + [f"z[{j},{k}]" for k in range(K) for j in range(M)]
    A = np.vstack(rows)
    lp = LinearProgram(c=c, A=A, b=np.array(rhs), senses=("<=",) * A.shape[0],
                       lb=lb, ub=ub, names=tuple(names))
    return RelaxedDualLP(lp=lp, M=M, K=K)
