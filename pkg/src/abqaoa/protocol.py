"""Outer loop: level-1 seeding, restarts, and level-by-level extension."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .maxcut import CostDiagonal, ExactSolution, GraphInstance, build_cost_diagonal, solve_exact
from .metrics import accuracy
from .optimizer import InnerLoopResult, NumericalError, OptimizerConfig, VariationalPoint, inner_loop
from .statevector import BiasFieldError, fidelity_to_manifold

log = logging.getLogger(__name__)

MODES = ("standard", "adaptive")


@dataclass(frozen=True)
class ProtocolConfig:
    R: int = 10
    alpha: float = 0.6
    target_p: int = 3
    mode: str = "adaptive"
    master_seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # landscape bounds for gamma_1 in [-pi/2, pi/2], beta_1 in [-pi/4, pi/4] mapped to u_1, v_1
    init_u_range: float = math.sqrt(2) * math.pi / 2
    init_v_range: float = math.sqrt(2) * math.pi / 4
    init_bias: float = 1.0

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.target_p < 1:
            raise ValueError("target_p must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def effective_optimizer(self) -> OptimizerConfig:
        if self.mode == "standard":
            return replace(self.optimizer, learning_rate_ell=0.0)
        return self.optimizer


def stream(master_seed: int, graph_id: str, level: int, restart: int) -> np.random.Generator:
    """Independent RNG stream per (graph, level, restart); order of execution is irrelevant."""
    key = (zlib.crc32(graph_id.encode()), level, restart)
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def seed_level1(cfg: ProtocolConfig, n: int, graph_id: str = "") -> list[VariationalPoint]:
    h0 = cfg.init_bias if cfg.mode == "adaptive" else 0.0
    points = []
    for s in range(cfg.R):
        rng = stream(cfg.master_seed, graph_id, 1, s)
        u = rng.uniform(-cfg.init_u_range, cfg.init_u_range, size=1)
        v = rng.uniform(-cfg.init_v_range, cfg.init_v_range, size=1)
        points.append(VariationalPoint.from_arrays(u, v, np.full(n, h0)))
    return points


def _perturb(a: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    # a + alpha * Normal(0, a^2), elementwise; zero entries stay zero
    return a + alpha * np.abs(a) * rng.standard_normal(a.size)


def extend_points(
    best: VariationalPoint, cfg: ProtocolConfig, graph_id: str = "", level: int | None = None
) -> list[VariationalPoint]:
    """R starting points at level p'+1 from the best point at level p'.

    Point 0 is the plain extension (a zero amplitude appended); the others
    perturb every u, v and h entry before appending.
    """
    level = best.level + 1 if level is None else level
    points = [VariationalPoint.from_arrays(np.append(best.u, 0.0), np.append(best.v, 0.0), best.bias.copy())]
    for s in range(1, cfg.R):
        rng = stream(cfg.master_seed, graph_id, level, s)
        u = _perturb(best.u, cfg.alpha, rng)
        v = _perturb(best.v, cfg.alpha, rng)
        h = _perturb(best.bias, cfg.alpha, rng)
        points.append(VariationalPoint.from_arrays(np.append(u, 0.0), np.append(v, 0.0), h))
    return points


@dataclass
class RestartSummary:
    index: int
    e_f: float
    n_ite: int
    converged: bool
    error: str | None = None


@dataclass
class LevelRecord:
    level: int
    best_point: VariationalPoint
    best_restart: int
    e_best: float
    e_opt: float
    e_max: float
    r: float
    f: float
    n_ite_mean: float
    per_restart: list[RestartSummary]
    best_result: InnerLoopResult | None = None


class LevelFailure(RuntimeError):
    pass


def _restart(args) -> tuple[int, InnerLoopResult | None, str | None]:
    index, point, d, sol, opt, record_trace, inner = args
    try:
        return index, inner(point, d, sol, opt, record_trace=record_trace), None
    except (NumericalError, BiasFieldError) as exc:
        log.error("restart %d failed: %s", index, exc)
        return index, None, f"{type(exc).__name__}: {exc}"


def run_level(
    points: list[VariationalPoint],
    d: CostDiagonal,
    sol: ExactSolution,
    cfg: ProtocolConfig,
    *,
    map_fn: Callable = map,
    record_trace: bool = False,
    inner: Callable | None = None,
) -> LevelRecord:
    """Optimize every starting point and keep the lowest final energy.

    Ties go to the lowest restart index. A restart that raises a numerical
    error is recorded and skipped. ``inner`` replaces the inner loop (same
    signature as :func:`inner_loop`), mostly for tests.
    """
    levels = {pt.level for pt in points}
    if len(levels) != 1:
        raise ValueError(f"points span several levels: {sorted(levels)}")
    opt = cfg.effective_optimizer
    jobs = [(i, pt, d, sol, opt, record_trace, inner or inner_loop) for i, pt in enumerate(points)]
    outcomes = sorted(map_fn(_restart, jobs), key=lambda o: o[0])

    summaries = []
    best: tuple[int, InnerLoopResult] | None = None
    for i, res, err in outcomes:
        if res is None:
            summaries.append(RestartSummary(i, math.nan, 0, False, err))
            continue
        summaries.append(RestartSummary(i, res.e_f, res.n_ite, res.converged))
        if best is None or res.e_f < best[1].e_f:
            best = (i, res)
    if best is None:
        raise LevelFailure(f"all {len(points)} restarts failed at level {levels.pop()}")

    index, res = best
    e_opt = d.e0 - res.e_f
    f = fidelity_to_manifold(res.state, sol) if res.state is not None else math.nan
    ok = [s.n_ite for s in summaries if s.error is None]
    return LevelRecord(
        level=res.point.level,
        best_point=res.point,
        best_restart=index,
        e_best=res.e_f,
        e_opt=e_opt,
        e_max=sol.e_max,
        r=accuracy(e_opt, sol.e_max),
        f=f,
        n_ite_mean=float(np.mean(ok)),
        per_restart=summaries,
        best_result=res,
    )


def run_sweep(
    g: GraphInstance,
    cfg: ProtocolConfig,
    *,
    map_fn: Callable = map,
    record_trace: bool = False,
) -> list[LevelRecord]:
    """Levels 1..target_p, each seeded from the previous level's best point."""
    d = build_cost_diagonal(g)
    sol = solve_exact(d)
    records: list[LevelRecord] = []
    points = seed_level1(cfg, g.n, g.id)
    for level in range(1, cfg.target_p + 1):
        if level > 1:
            points = extend_points(records[-1].best_point, cfg, g.id, level)
        rec = run_level(points, d, sol, cfg, map_fn=map_fn, record_trace=record_trace)
        log.info("%s %s level %d: r=%.6f F=%.4f", g.id, cfg.mode, level, rec.r, rec.f)
        records.append(rec)
    return records
