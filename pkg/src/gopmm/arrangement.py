"""Hyperplane filtering and cell enumeration for qualifying-constraint arrangements.

A hyperplane is a row ``(a..., b)`` describing ``a'x + b``.  A region is
labelled by a 0/1 sign vector over the reduced arrangement: bit 1 means
``a'x + b <= 0`` and bit 0 means ``a'x + b >= 0``.  Regions are certified
by an LP that maximizes a common slack ``z`` inside the box ``|x_j| <= P``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .convex_solvers import OPTIMAL, LinearProgram, solve_lp

SignVector = tuple[int, ...]


class DegenerateArrangementError(RuntimeError):
    """No strictly signed point could be found around the arrangement center."""


@dataclass(frozen=True)
class Arrangement:
    """Reduced arrangement plus the map back to the original rows.

    ``position[r]`` is ``(unique index, orientation)`` for original row
    ``r``, or ``None`` when that row was dropped as trivial.
    """

    A: np.ndarray
    b: np.ndarray
    position: tuple[tuple[int, int] | None, ...]

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def empty(self) -> bool:
        return self.size == 0

    def values(self, points: np.ndarray) -> np.ndarray:
        """``a'x + b`` for each point (rows) and hyperplane (columns)."""
        return np.atleast_2d(points) @ self.A.T + self.b

    def expand(self, bits: Iterable[int]) -> np.ndarray:
        """Sign vector over the reduced arrangement -> label over the original rows.

        Rows merged with opposite orientation get the complementary bit;
        trivial rows get 0.
        """
        bits = tuple(bits)
        out = np.zeros(len(self.position), dtype=int)
        for r, pos in enumerate(self.position):
            if pos is None:
                continue
            u, orient = pos
            out[r] = bits[u] if orient > 0 else 1 - bits[u]
        return out


def preprocess(hyperplanes: np.ndarray, zero_tau: float = 1e-12,
               dedup_tau: float = 1e-9) -> Arrangement:
    """Drop all-zero rows and merge proportional ones.

    Rows are scaled to unit norm before the proportionality test, which
    checks every 2x2 minor ``|u_l v_n - v_l u_n| <= dedup_tau``.  The first
    occurrence of each hyperplane is kept as its representative.
    """
    H = np.atleast_2d(np.asarray(hyperplanes, dtype=float))
    reps: list[np.ndarray] = []
    position: list[tuple[int, int] | None] = []
    for row in H:
        if np.all(np.abs(row) <= zero_tau):
            position.append(None)
            continue
        u = row / np.linalg.norm(row)
        match = None
        for idx, v in enumerate(reps):
            minors = np.outer(u, v) - np.outer(v, u)
            if np.abs(minors).max() <= dedup_tau:
                match = (idx, 1 if float(u @ v) > 0 else -1)
                break
        if match is None:
            reps.append(u)
            match = (len(reps) - 1, 1)
        position.append(match)
    d = H.shape[1] - 1
    U = np.array(reps).reshape(-1, d + 1)
    return Arrangement(A=U[:, :d].copy(), b=U[:, d].copy(), position=tuple(position))


def signs_at(arr: Arrangement, point: np.ndarray) -> SignVector:
    vals = arr.values(point)[0]
    return tuple(int(v <= 0.0) for v in vals)


def interior_point(bits: SignVector, arr: Arrangement, P: float = 1.0,
                   within: tuple[np.ndarray, np.ndarray] | None = None
                   ) -> tuple[np.ndarray, float] | None:
    """Deepest point of a region inside the box ``|x_j| <= P``.

    Maximizes ``z`` with every region row and every box face backed off by
    ``z``.  ``within = (C, e)`` adds fixed rows ``C x + e <= 0`` that every
    region must also satisfy (backed off by ``z`` as well).  Returns
    ``(point, z*)`` or ``None`` when the LP is infeasible.  Callers compare
    ``z*`` against their own emptiness threshold.
    """
    d = arr.dim
    n = d + 1
    sgn = np.where(np.asarray(bits) == 1, 1.0, -1.0)
    # bit 1: a'x + z <= -b ; bit 0: -a'x + z <= b
    rows_h = np.column_stack([sgn[:, None] * arr.A, np.ones(arr.size)])
    rhs_h = -sgn * arr.b
    eye = np.eye(d)
    blocks = [rows_h, np.column_stack([eye, np.ones(d)]), np.column_stack([-eye, np.ones(d)])]
    rhs = [rhs_h, np.full(2 * d, float(P))]
    if within is not None and len(within[1]):
        C, e = within
        blocks.append(np.column_stack([C, np.ones(len(e))]))
        rhs.append(-np.asarray(e, dtype=float))
    A = np.vstack(blocks)
    rhs = np.concatenate(rhs)
    c = np.zeros(n)
    c[-1] = -1.0
    lb = np.concatenate([np.full(d, -float(P)), [0.0]])
    lp = LinearProgram(c=c, A=A, b=rhs, senses=("<=",) * A.shape[0], lb=lb, ub=np.inf)
    res = solve_lp(lp)
    if res.status != OPTIMAL:
        return None
    return res.point[:d], float(res.point[d])


def _nonempty(bits: SignVector, arr: Arrangement, P: float, interior_tau: float,
              within=None) -> bool:
    found = interior_point(bits, arr, P, within)
    return found is not None and found[1] > interior_tau


def find_root_region(arr: Arrangement, x_center: np.ndarray, P: float = 1.0,
                     interior_tau: float = 1e-8, seed: int = 0,
                     retries: int = 100, within=None) -> SignVector:
    """Sign vector of a certified region next to ``x_center``.

    Steps from ``x_center`` along random unit directions, halfway to the
    box boundary, until every hyperplane is strictly signed and the region
    passes the interior-point check.  With ``within`` the walk starts from
    the deepest point of the fixed polytope instead and stays inside it.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    x_center = np.asarray(x_center, dtype=float).ravel()
    d = arr.dim
    radius = None
    if within is not None and len(within[1]):
        found = interior_point((), Arrangement(np.zeros((0, d)), np.zeros(0), ()), P, within)
        if found is None or not found[1] > interior_tau:
            raise DegenerateArrangementError("the fixed polytope has no interior")
        x_center, radius = found[0], 0.5 * found[1]
    for attempt in range(retries):
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        if radius is not None:
            step = 0.0 if attempt == 0 else radius * float(rng.random())
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                room = np.where(direction > 0, (P - x_center) / direction,
                                np.where(direction < 0, (-P - x_center) / direction, np.inf))
            step = 0.5 * float(room.min())
            if not step > 0.0:
                continue
        point = x_center + step * direction
        vals = arr.values(point)[0]
        if np.any(np.abs(vals) <= interior_tau):
            continue
        bits = tuple(int(v < 0.0) for v in vals)
        if _nonempty(bits, arr, P, interior_tau, within):
            return bits
    raise DegenerateArrangementError(
        f"no strictly signed interior region found after {retries} directions")


def _flip(bits: SignVector, h: int) -> SignVector:
    return bits[:h] + (1 - bits[h],) + bits[h + 1:]


def strict_hyperplanes(region: SignVector, arr: Arrangement, P: float = 1.0,
                       interior_tau: float = 1e-8,
                       known: set[SignVector] | None = None, within=None) -> list[int]:
    """Indices whose sign flip leaves a nonempty region.

    Flips that land on a region in ``known`` (already certified) skip the LP.
    """
    out = []
    for h in range(arr.size):
        flipped = _flip(region, h)
        if (known is not None and flipped in known) or _nonempty(flipped, arr, P, interior_tau, within):
            out.append(h)
    return out


def _margin(bits: SignVector, arr: Arrangement, point: np.ndarray, P: float,
            within=None) -> float:
    """Smallest slack of ``point`` over the region rows, box faces and fixed rows.

    Any positive value is a feasible ``z`` for the interior-point LP.
    """
    sgn = np.where(np.asarray(bits) == 1, 1.0, -1.0)
    slack = [-sgn * (arr.A @ point + arr.b), P - np.abs(point)]
    if within is not None and len(within[1]):
        slack.append(-(within[0] @ point + within[1]))
    return float(min(v.min() for v in slack))


def enumerate_regions(arr: Arrangement, P: float = 1.0, x_center: np.ndarray | None = None,
                      interior_tau: float = 1e-8, seed: int = 0,
                      within: tuple[np.ndarray, np.ndarray] | None = None) -> list[SignVector]:
    """All nonempty regions of ``arr`` inside the box, sorted lexicographically.

    Breadth-first search over the region adjacency graph: each popped region
    is expanded by flipping its strict hyperplanes.  ``within = (C, e)``
    restricts the search to cells meeting the interior of ``C x + e <= 0``;
    the cells of a convex set stay connected under single flips.

    A flip is accepted without an LP when the region's known interior point,
    mirrored across the flipped hyperplane, already clears every row by more
    than ``interior_tau``.  Flips found empty are remembered.
    """
    if arr.empty:
        return [()]
    if x_center is None:
        x_center = np.zeros(arr.dim)
    root = find_root_region(arr, x_center, P, interior_tau, seed, within=within)
    found = interior_point(root, arr, P, within)
    points = {root: found[0]}
    empty: set[SignVector] = set()
    frontier = deque([root])
    closed: list[SignVector] = []
    norms2 = np.einsum("ij,ij->i", arr.A, arr.A)
    while frontier:
        region = frontier.popleft()
        p = points[region]
        vals = arr.A @ p + arr.b
        for h in range(arr.size):
            adj = _flip(region, h)
            if adj in points or adj in empty:
                continue
            if norms2[h] > 0.0:
                q = p - (2.0 * vals[h] / norms2[h]) * arr.A[h]
                if _margin(adj, arr, q, P, within) > interior_tau:
                    points[adj] = q
                    frontier.append(adj)
                    continue
            cert = interior_point(adj, arr, P, within)
            if cert is not None and cert[1] > interior_tau:
                points[adj] = cert[0]
                frontier.append(adj)
            else:
                empty.add(adj)
        closed.append(region)
    return sorted(closed)
