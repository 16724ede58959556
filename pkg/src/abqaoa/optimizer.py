"""Inner optimization loop at a fixed level.

Each iteration evaluates the energy at the current point plus one
forward-difference probe per Fourier amplitude (2p+1 circuits in one batch),
takes an Adam step on (u, v), and feeds the measured <Z_j> back into the bias
fields. The bias fields are never differentiated.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .maxcut import CostDiagonal, ExactSolution
from .schedule import FourierPoint, to_schedule
from .statevector import (
    H_MAX,
    check_bias,
    evolve_batch,
    expect_z_all,
    fidelity_to_manifold,
    initial_state,
    probabilities,
    sample_bitstrings,
    z_from_samples,
)

log = logging.getLogger(__name__)


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class VariationalPoint:
    fourier: FourierPoint
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))

    @classmethod
    def from_arrays(cls, u, v, h) -> "VariationalPoint":
        return cls(FourierPoint(u, v), h)

    @property
    def u(self) -> np.ndarray:
        return self.fourier.u

    @property
    def v(self) -> np.ndarray:
        return self.fourier.v

    @property
    def level(self) -> int:
        return self.fourier.level


@dataclass(frozen=True)
class OptimizerConfig:
    eps_g: float = 1e-4
    adam_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    learning_rate_ell: float = 1.1
    tol: float = 1e-6
    max_iter: int = 1000
    h_max: float = H_MAX
    central_difference: bool = False
    shots: int | None = None

    def __post_init__(self):
        if self.eps_g <= 0 or self.tol <= 0:
            raise ValueError("eps_g and tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.learning_rate_ell < 0:
            raise ValueError("learning rate ell must be >= 0")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")


class CostEvaluator:
    """Batched <H_C> for many Fourier points that share one bias field.

    ``n_evals`` counts circuits, one per row. With ``shots`` set, energies and
    the <Z_j> of row 0 are estimated from a single shot record per row.
    """

    def __init__(self, d: CostDiagonal, shots: int | None = None, rng=None):
        self.d = d
        self.shots = shots
        self.rng = np.random.default_rng(rng)
        self.n_evals = 0
        self.states: np.ndarray | None = None
        self._z0: np.ndarray | None = None

    def __call__(self, u, v, h) -> np.ndarray:
        u = np.atleast_2d(u)
        v = np.atleast_2d(v)
        gammas, betas = to_schedule(u, v)
        self.states = evolve_batch(self.d, gammas, betas, h)
        self.n_evals += len(u)
        if self.shots is None:
            self._z0 = None
            return probabilities(self.states) @ self.d.values
        energies = np.empty(len(u))
        for i, psi in enumerate(self.states):
            samples = sample_bitstrings(psi, self.shots, self.rng)
            energies[i] = self.d.values[samples].mean()
            if i == 0:
                self._z0 = z_from_samples(samples, self.d.n)
        return energies

    def z_expect(self) -> np.ndarray:
        """<Z_j> for row 0 of the last batch."""
        if self._z0 is not None:
            return self._z0
        return expect_z_all(self.states[0])


Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def energy_of_point(pt: VariationalPoint, d: CostDiagonal) -> float:
    return float(CostEvaluator(d)(pt.u, pt.v, pt.bias)[0])


def probe_batch(u: np.ndarray, v: np.ndarray, eps_g: float, central: bool = False):
    """Rows: the point itself, then +eps on each u_l, then +eps on each v_l.

    Central mode appends the matching -eps rows.
    """
    p = u.size
    x = np.concatenate([u, v])
    shifts = eps_g * np.eye(2 * p)
    rows = [x[None, :], x + shifts]
    if central:
        rows.append(x - shifts)
    batch = np.vstack(rows)
    return batch[:, :p], batch[:, p:]


def gradient_from_energies(energies: np.ndarray, p: int, eps_g: float, central: bool = False):
    e0 = energies[0]
    plus = energies[1 : 2 * p + 1]
    if central:
        grad = (plus - energies[2 * p + 1 :]) / (2 * eps_g)
    else:
        grad = (plus - e0) / eps_g
    return grad[:p], grad[p:]


def gradient_uv(
    pt: VariationalPoint, evaluate: Evaluator | CostDiagonal, eps_g: float = 1e-4, central: bool = False
):
    """Finite-difference gradient of the energy in (u, v).

    Returns ``(du, dv, energy_at_point)``. The forward version uses exactly
    2p+1 energy evaluations, issued as a single batch.
    """
    if eps_g <= 0:
        raise ValueError("eps_g must be positive")
    if isinstance(evaluate, CostDiagonal):
        evaluate = CostEvaluator(evaluate)
    us, vs = probe_batch(pt.u, pt.v, eps_g, central)
    energies = np.asarray(evaluate(us, vs, pt.bias), dtype=float)
    du, dv = gradient_from_energies(energies, pt.level, eps_g, central)
    return du, dv, float(energies[0])


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, cfg: OptimizerConfig) -> np.ndarray:
    """One bias-corrected Adam update; advances ``state`` in place."""
    if grad.shape != state.m.shape:
        raise ValueError(f"gradient shape {grad.shape} != state shape {state.m.shape}")
    state.t += 1
    state.m = cfg.adam_beta1 * state.m + (1 - cfg.adam_beta1) * grad
    state.v = cfg.adam_beta2 * state.v + (1 - cfg.adam_beta2) * grad * grad
    m_hat = state.m / (1 - cfg.adam_beta1**state.t)
    v_hat = state.v / (1 - cfg.adam_beta2**state.t)
    return params - cfg.adam_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def update_bias(h: np.ndarray, z_expect: np.ndarray, ell: float, h_max: float = H_MAX) -> np.ndarray:
    """h_j <- h_j - ell * (h_j - <Z_j>), clipped to [-h_max, h_max]."""
    h = np.asarray(h, dtype=float)
    z_expect = np.asarray(z_expect, dtype=float)
    if h.shape != z_expect.shape:
        raise ValueError(f"bias shape {h.shape} != <Z> shape {z_expect.shape}")
    new = h - ell * (h - z_expect)
    if np.any(np.abs(new) > h_max):
        log.warning("bias field clipped to +/-%g: %s", h_max, new)
        new = np.clip(new, -h_max, h_max)
    return new


@dataclass
class IterationTrace:
    """Per-iteration record; row 0 is the starting point, row t follows update t."""

    energy: list[float] = field(default_factory=list)
    bias: list[np.ndarray] = field(default_factory=list)
    fidelity: list[float] = field(default_factory=list)
    fidelity_start: list[float] = field(default_factory=list)

    def append(self, energy, bias, fidelity=None, fidelity_start=None):
        self.energy.append(float(energy))
        self.bias.append(np.array(bias, dtype=float))
        if fidelity is not None:
            self.fidelity.append(float(fidelity))
            self.fidelity_start.append(float(fidelity_start))

    def __len__(self):
        return len(self.energy)

    def write_csv(self, path: str | Path) -> None:
        """Columns: iteration, energy, fidelity, fidelity_start, h_1..h_n."""
        n = self.bias[0].size if self.bias else 0
        has_f = bool(self.fidelity)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["iteration", "energy", "fidelity", "fidelity_start"] + [f"h_{j + 1}" for j in range(n)]
            )
            for i, (e, h) in enumerate(zip(self.energy, self.bias)):
                f = (repr(self.fidelity[i]), repr(self.fidelity_start[i])) if has_f else ("", "")
                w.writerow([i, repr(e), *f] + [repr(float(x)) for x in h])


@dataclass
class InnerLoopResult:
    point: VariationalPoint
    e_f: float
    n_ite: int
    converged: bool
    state: np.ndarray
    n_evals: int
    trace: IterationTrace | None = None


def inner_loop(
    init: VariationalPoint,
    d: CostDiagonal,
    sol: ExactSolution | None = None,
    cfg: OptimizerConfig = OptimizerConfig(),
    *,
    evaluator: Evaluator | None = None,
    record_trace: bool = False,
    rng=None,
) -> InnerLoopResult:
    """Optimize one starting point until the energy change drops below ``cfg.tol``."""
    if init.bias.size != d.n:
        raise ValueError(f"bias length {init.bias.size} != qubit count {d.n}")
    check_bias(init.bias, cfg.h_max)
    evaluator = evaluator or CostEvaluator(d, shots=cfg.shots, rng=rng)
    p = init.level
    x = np.concatenate([init.u, init.v])
    h = init.bias.copy()
    adam = AdamState.zeros(2 * p)
    trace = IterationTrace() if record_trace else None

    def measure(x, h):
        us, vs = probe_batch(x[:p], x[p:], cfg.eps_g, cfg.central_difference)
        energies = np.asarray(evaluator(us, vs, h), dtype=float)
        if not np.all(np.isfinite(energies)):
            raise NumericalError(
                f"non-finite energy at level {p}: u={x[:p]!r} v={x[p:]!r} h={h!r} energies={energies!r}"
            )
        return energies

    def record(energy, h):
        if trace is None:
            return
        if sol is not None and getattr(evaluator, "states", None) is not None:
            f = fidelity_to_manifold(evaluator.states[0], sol)
            f0 = fidelity_to_manifold(initial_state(h), sol)
            trace.append(energy, h, f, f0)
        else:
            trace.append(energy, h)

    energies = measure(x, h)
    energy = energies[0]
    record(energy, h)
    n_ite = 0
    converged = False
    while n_ite < cfg.max_iter:
        du, dv = gradient_from_energies(energies, p, cfg.eps_g, cfg.central_difference)
        z = evaluator.z_expect() if hasattr(evaluator, "z_expect") else np.zeros(d.n)
        x = adam_step(x, np.concatenate([du, dv]), adam, cfg)
        if cfg.learning_rate_ell:
            h = update_bias(h, z, cfg.learning_rate_ell, cfg.h_max)
        n_ite += 1
        previous = energy
        energies = measure(x, h)
        energy = energies[0]
        record(energy, h)
        if abs(energy - previous) < cfg.tol:
            converged = True
            break

    states = getattr(evaluator, "states", None)
    return InnerLoopResult(
        point=VariationalPoint.from_arrays(x[:p], x[p:], h),
        e_f=float(energy),
        n_ite=n_ite,
        converged=converged,
        state=None if states is None else states[0].copy(),
        n_evals=getattr(evaluator, "n_evals", 0),
        trace=trace,
    )


def standard_config(cfg: OptimizerConfig) -> OptimizerConfig:
    """The same optimizer with bias feedback switched off."""
    return replace(cfg, learning_rate_ell=0.0)

