"""Branch-and-bound driver alternating primal QPs and relaxed dual LPs."""
from __future__ import annotations

import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .arrangement import DegenerateArrangementError, enumerate_regions, preprocess
from .convex_solvers import OPTIMAL, solve_lp, solve_primal
from .core import FactorPair, ProblemInstance, SolverConfig, make_rng
from .lagrangian import (NodeCutData, assemble_relaxed_dual, build_cut_data, region_rows,
                         vec)

log = logging.getLogger(__name__)

CONVERGED = "converged"
ITERATION_LIMIT = "iteration_limit"
TIME_LIMIT = "time_limit"

TIMING_KEYS = ("primal", "pre", "uri", "dual", "total")


@dataclass
class BnbNode:
    id: int
    parent: int | None
    x_opt: np.ndarray
    rlbd_value: float
    created_at: int
    region_label: np.ndarray | None = None
    cut_data: NodeCutData | None = None


@dataclass
class SolveState:
    nodes: dict[int, BnbNode]
    candidates: list[tuple[float, int, int]]
    pubd: float
    rlbd: float
    incumbent: FactorPair | None
    T: int
    current: int | None
    history: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=lambda: dict.fromkeys(TIMING_KEYS, 0.0))
    relaxed_duals: int = 0
    exhausted: bool = False

    @property
    def iterations(self) -> int:
        return self.T - 1

    @property
    def gap(self) -> float:
        return self.pubd - self.rlbd


@dataclass
class SolveReport:
    status: str
    best: FactorPair | None
    pubd: float
    rlbd: float
    gap: float
    iterations: int
    history: list[dict]
    timings: dict[str, float]
    relaxed_duals: int

    def to_json(self, include_wall_clock: bool = True) -> dict:
        def num(v):
            return float(v) if math.isfinite(v) else None

        history = []
        for rec in self.history:
            rec = dict(rec, pubd=num(rec["pubd"]), rlbd=num(rec["rlbd"]))
            if not include_wall_clock:
                rec.pop("ms")
            history.append(rec)
        doc = {
            "status": self.status,
            "pubd": num(self.pubd),
            "rlbd": num(self.rlbd),
            "gap": num(self.gap) if math.isfinite(self.pubd) and math.isfinite(self.rlbd) else None,
            "iterations": self.iterations,
            "relaxed_duals": self.relaxed_duals,
            "x": None if self.best is None else self.best.x.tolist(),
            "theta": None if self.best is None else self.best.theta.tolist(),
            "history": history,
        }
        if include_wall_clock:
            doc["timings"] = {k: round(self.timings[k], 3) for k in TIMING_KEYS}
        return doc


def initial_point(instance: ProblemInstance, seed: int) -> np.ndarray:
    """Uniform draw in the box ``|x| <= P`` rescaled to l1 norm ``0.9 P``."""
    rng = make_rng(seed)
    x = rng.uniform(-instance.P, instance.P, size=(instance.M, instance.K))
    norm = np.abs(x).sum()
    if norm == 0.0:
        x[0, 0] = 1.0
        norm = 1.0
    return x * (0.9 * instance.P / norm)


def init(instance: ProblemInstance, config: SolverConfig) -> SolveState:
    root = BnbNode(id=0, parent=None, x_opt=initial_point(instance, config.seed),
                   rlbd_value=-math.inf, created_at=0)
    return SolveState(nodes={0: root}, candidates=[], pubd=math.inf, rlbd=-math.inf,
                      incumbent=None, T=1, current=0)


def path_pairs(state: SolveState, node_id: int) -> list[tuple[NodeCutData, np.ndarray]]:
    """``(parent cut data, label)`` for every labelled node from the root down to ``node_id``."""
    pairs = []
    node = state.nodes[node_id]
    while node.parent is not None:
        parent = state.nodes[node.parent]
        pairs.append((parent.cut_data, node.region_label))
        node = parent
    pairs.reverse()
    return pairs


def _clip_budget(x: np.ndarray, P: float) -> np.ndarray:
    norm = float(np.abs(x).sum())
    return x * (P / norm) if norm > P else x


def _solve_region(args):
    pairs, P, zero_tau, lp_tol = args
    rd = assemble_relaxed_dual(pairs, P, zero_tau)
    res = solve_lp(rd.lp, lp_tol)
    if res.status != OPTIMAL:
        return None
    q, x, _ = rd.split(res.point)
    return q, x


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def iterate(state: SolveState, instance: ProblemInstance, config: SolverConfig) -> SolveState:
    """One primal solve, region split and relaxed dual sweep at ``state.current``."""
    if state.current is None:
        raise RuntimeError("no node to process; the search space is exhausted")
    t_start = time.perf_counter()
    node = state.nodes[state.current]
    P = instance.P

    t0 = time.perf_counter()
    primal = solve_primal(instance, node.x_opt)
    if primal.objective < state.pubd:
        state.pubd = primal.objective
        state.incumbent = FactorPair(x=node.x_opt, theta=primal.theta)
    t1 = time.perf_counter()

    cut = build_cut_data(instance.y, node.x_opt, primal)
    node.cut_data = cut
    arr = preprocess(cut.hyperplanes(), config.zero_tau, config.dedup_tau)
    t2 = time.perf_counter()

    # only cells with interior inside this node's own region become children
    ancestors = path_pairs(state, node.id)
    within = region_rows(ancestors, config.zero_tau) if ancestors else None
    try:
        regions = enumerate_regions(arr, P, vec(node.x_opt), config.interior_tau,
                                    seed=config.seed + state.T, within=within)
    except DegenerateArrangementError:
        log.debug("node %d: region has no interior, no children", node.id)
        regions = []
    labels = [arr.expand(bits) for bits in regions]
    t3 = time.perf_counter()

    jobs = [(ancestors + [(cut, lab)], P, config.zero_tau, config.lp_tol) for lab in labels]
    results = _map(_solve_region, jobs, config.workers)
    t4 = time.perf_counter()

    threshold = state.pubd - config.epsilon if config.fathom else math.inf
    for lab, res in zip(labels, results):
        if res is None:
            continue
        q, x = res
        if not q < threshold:
            continue
        child = BnbNode(id=len(state.nodes), parent=node.id,
                        x_opt=_clip_budget(x, P), rlbd_value=q,
                        created_at=state.T, region_label=lab)
        state.nodes[child.id] = child
        heapq.heappush(state.candidates, (q, child.created_at, child.id))

    if state.candidates:
        key, _, nid = heapq.heappop(state.candidates)
        # keys inserted before PUBD improved may exceed it; the optimum never does
        state.rlbd = max(state.rlbd, min(key, state.pubd))
        state.current = nid
    else:
        state.rlbd = state.pubd
        state.current = None
        state.exhausted = True

    t_end = time.perf_counter()
    for k, dt in (("primal", t1 - t0), ("pre", t2 - t1), ("uri", t3 - t2),
                  ("dual", t4 - t3), ("total", t_end - t_start)):
        state.timings[k] += dt
    state.relaxed_duals += len(labels)
    state.history.append({"t": state.T, "pubd": state.pubd, "rlbd": state.rlbd,
                          "node": node.id, "regions": len(labels),
                          "ms": round(1000.0 * (t_end - t_start), 3)})
    state.T += 1
    return state


def run(instance: ProblemInstance, config: SolverConfig,
        on_iteration: Callable[[SolveState], None] | None = None) -> SolveReport:
    """Iterate until ``PUBD - RLBD <= epsilon`` or a limit is hit."""
    state = init(instance, config)
    started = time.monotonic()
    status = ITERATION_LIMIT
    while True:
        if state.iterations > 0 and state.gap <= config.epsilon:
            status = CONVERGED
            break
        if state.iterations >= config.max_iterations:
            status = ITERATION_LIMIT
            break
        if time.monotonic() - started >= config.max_wall_seconds:
            status = TIME_LIMIT
            break
        iterate(state, instance, config)
        log.debug("T=%d PUBD=%.6g RLBD=%.6g open=%d", state.iterations, state.pubd,
                  state.rlbd, len(state.candidates))
        if on_iteration is not None:
            on_iteration(state)
    return SolveReport(status=status, best=state.incumbent, pubd=state.pubd, rlbd=state.rlbd,
                       gap=state.gap, iterations=state.iterations, history=state.history,
                       timings=dict(state.timings), relaxed_duals=state.relaxed_duals)


def profile_one_iteration(instance: ProblemInstance, config: SolverConfig) -> dict[str, float]:
    """Component timings (seconds) and relaxed dual count for a single iteration."""
    state = init(instance, config)
    iterate(state, instance, config)
    t = state.timings
    return {"Primal": t["primal"], "Pre": t["pre"], "URI": t["uri"],
            "Num": state.relaxed_duals, "Dual": t["dual"], "Total": t["total"]}
