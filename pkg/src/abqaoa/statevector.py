"""Dense statevector simulation of (biased) QAOA circuits.

States are plain complex128 arrays of length 2**n using the bit convention of
:mod:`abqaoa.maxcut`. Single-state helpers return new arrays; the batched
kernel :func:`evolve_batch` is what the optimizer calls in its hot loop.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from numba import njit

from .maxcut import CostDiagonal, ExactSolution, spin_table

H_MAX = 10.0


class DimensionError(ValueError):
    pass


class BiasFieldError(ValueError):
    pass


def num_qubits(psi: np.ndarray) -> int:
    n = int(psi.shape[-1]).bit_length() - 1
    if 1 << n != psi.shape[-1]:
        raise DimensionError(f"state length {psi.shape[-1]} is not a power of two")
    return n


def check_bias(h, h_max: float = H_MAX) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 1:
        raise BiasFieldError("bias field must be one-dimensional")
    if not np.all(np.isfinite(h)):
        raise BiasFieldError(f"non-finite bias field {h}")
    if np.any(np.abs(h) > h_max):
        raise BiasFieldError(f"|h| exceeds h_max={h_max}: {h}")
    return h


def single_qubit_ground(h: float) -> tuple[float, float]:
    """Ground state (a, b) of X - hZ with a > 0.

    The unnormalised vector is (1, -(w - h)) with w = sqrt(1 + h^2); for h > 0
    the difference is rewritten as 1/(w + h) to avoid cancellation.
    """
    w = math.hypot(1.0, h)
    d = w - h if h <= 0 else 1.0 / (w + h)
    a = 1.0 / math.sqrt(1.0 + d * d)
    return a, -d * a


def initial_state(h) -> np.ndarray:
    """Product of single-qubit ground states; the |0..0> amplitude is real and positive."""
    h = check_bias(h)
    return _product_state(h, 1 << h.size)


def _check_diag(psi: np.ndarray, d: CostDiagonal) -> None:
    if psi.shape[-1] != d.values.size:
        raise DimensionError(f"state length {psi.shape[-1]} != diagonal length {d.values.size}")


def apply_cost_phase(psi: np.ndarray, d: CostDiagonal, gamma: float) -> np.ndarray:
    _check_diag(psi, d)
    return psi * np.exp(-1j * gamma * d.values)


def mixer_matrix(hj: float, beta: float) -> np.ndarray:
    """exp(-i beta (X - h Z)) in closed form."""
    w = math.hypot(1.0, hj)
    c, s = math.cos(beta * w), math.sin(beta * w)
    return np.array(
        [[c + 1j * s * hj / w, -1j * s / w], [-1j * s / w, c - 1j * s * hj / w]]
    )


def apply_mixer(psi: np.ndarray, h, beta: float) -> np.ndarray:
    h = check_bias(h)
    n = num_qubits(psi)
    if h.size != n:
        raise DimensionError(f"bias length {h.size} != qubit count {n}")
    out = psi.copy()
    for j, hj in enumerate(h):
        u = mixer_matrix(hj, beta)
        view = out.reshape(-1, 2, 1 << j)
        a0, a1 = view[:, 0, :].copy(), view[:, 1, :].copy()
        view[:, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
        view[:, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    return out


@njit(cache=True)
def _product_state(h, dim):
    n = h.size
    a = np.empty(n)
    b = np.empty(n)
    for j in range(n):
        w = math.sqrt(1.0 + h[j] * h[j])
        d = w - h[j] if h[j] <= 0 else 1.0 / (w + h[j])
        a[j] = 1.0 / math.sqrt(1.0 + d * d)
        b[j] = -d * a[j]
    psi = np.empty(dim, dtype=np.complex128)
    for z in range(dim):
        amp = 1.0
        for j in range(n):
            amp *= b[j] if (z >> j) & 1 else a[j]
        psi[z] = amp
    return psi


@njit(cache=True, fastmath=True)
def _evolve_batch_kernel(levels, level_index, gammas, betas, h):
    batch, p = gammas.shape
    dim = level_index.size
    n = h.size
    nlev = levels.size
    psi0 = _product_state(h, dim)
    # rows sharing a gamma schedule share one phase table
    table_of = np.empty(batch, dtype=np.int64)
    owners = np.empty(batch, dtype=np.int64)
    ntab = 0
    for b in range(batch):
        table_of[b] = -1
        for t in range(ntab):
            same = True
            for k in range(p):
                if gammas[owners[t], k] != gammas[b, k]:
                    same = False
                    break
            if same:
                table_of[b] = t
                break
        if table_of[b] < 0:
            owners[ntab] = b
            table_of[b] = ntab
            ntab += 1
    phases = np.empty((ntab, p, nlev), dtype=np.complex128)
    for t in range(ntab):
        for k in range(p):
            g = gammas[owners[t], k]
            for q in range(nlev):
                phases[t, k, q] = complex(math.cos(g * levels[q]), -math.sin(g * levels[q]))

    out = np.empty((batch, dim), dtype=np.complex128)
    w = np.sqrt(1.0 + h * h)
    for b in range(batch):
        psi = out[b]
        psi[:] = psi0
        tab = phases[table_of[b]]
        for k in range(p):
            ph = tab[k]
            for z in range(dim):
                psi[z] *= ph[level_index[z]]
            beta = betas[b, k]
            for j in range(n):
                c = math.cos(beta * w[j])
                s = math.sin(beta * w[j])
                u00 = complex(c, s * h[j] / w[j])
                u01 = complex(0.0, -s / w[j])
                u11 = complex(c, -s * h[j] / w[j])
                stride = 1 << j
                for base in range(0, dim, 2 * stride):
                    for i in range(base, base + stride):
                        a0 = psi[i]
                        a1 = psi[i + stride]
                        psi[i] = u00 * a0 + u01 * a1
                        psi[i + stride] = u01 * a0 + u11 * a1
    return out


def evolve_batch(d: CostDiagonal, gammas: np.ndarray, betas: np.ndarray, h) -> np.ndarray:
    """Evolve one initial state under many schedules sharing the bias field.

    ``gammas`` and ``betas`` have shape (batch, p). Returns (batch, 2**n).
    """
    h = check_bias(h)
    gammas = np.ascontiguousarray(np.atleast_2d(np.asarray(gammas, dtype=float)))
    betas = np.ascontiguousarray(np.atleast_2d(np.asarray(betas, dtype=float)))
    if gammas.shape != betas.shape:
        raise DimensionError(f"gamma shape {gammas.shape} != beta shape {betas.shape}")
    if h.size != d.n:
        raise DimensionError(f"bias length {h.size} != qubit count {d.n}")
    return _evolve_batch_kernel(d.levels, d.level_index, gammas, betas, h)


def evolve(d: CostDiagonal, gammas, betas, h=None) -> np.ndarray:
    """Cost phase then mixer for each layer in order; ``h=None`` is plain QAOA."""
    gammas = np.asarray(gammas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if gammas.shape != betas.shape or gammas.ndim != 1:
        raise DimensionError(f"schedule lengths differ: {gammas.shape} vs {betas.shape}")
    if h is None:
        h = np.zeros(d.n)
    return evolve_batch(d, gammas[None, :], betas[None, :], h)[0]


def probabilities(psi: np.ndarray) -> np.ndarray:
    return psi.real**2 + psi.imag**2


def expect_cost(psi: np.ndarray, d: CostDiagonal) -> float:
    _check_diag(psi, d)
    return float(probabilities(psi) @ d.values)


def expect_z_all(psi: np.ndarray) -> np.ndarray:
    n = num_qubits(psi)
    return spin_table(n) @ probabilities(psi)


def fidelity_to_manifold(psi: np.ndarray, sol: ExactSolution) -> float:
    return float(probabilities(psi)[sol.ground_indices].sum())


def sample_bitstrings(psi: np.ndarray, shots: int, rng_seed=None) -> np.ndarray:
    """Draw basis-state indices i.i.d. from the Born distribution."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = probabilities(psi)
    rng = np.random.default_rng(rng_seed)
    return rng.choice(p.size, size=shots, p=p / p.sum())


def z_from_samples(samples: np.ndarray, n: int) -> np.ndarray:
    """<Z_j> estimates from a shot record of basis indices."""
    bits = (np.asarray(samples)[:, None] >> np.arange(n)) & 1
    return (1 - 2 * bits).mean(axis=0)


def cost_from_samples(samples: np.ndarray, d: CostDiagonal) -> float:
    """<H_C> estimate from the same shot record used for the ZZ terms."""
    return float(d.values[np.asarray(samples)].mean())


def dump_state(psi: np.ndarray, path: str | Path, text: bool = False) -> None:
    """Write interleaved (real, imag) float64 pairs, little-endian, index order."""
    pairs = np.empty((psi.size, 2), dtype="<f8")
    pairs[:, 0], pairs[:, 1] = psi.real, psi.imag
    if text:
        np.savetxt(path, pairs, fmt="%.17g")
    else:
        Path(path).write_bytes(pairs.tobytes())


def load_state(path: str | Path, text: bool = False) -> np.ndarray:
    if text:
        pairs = np.loadtxt(path, ndmin=2)
    else:
        pairs = np.frombuffer(Path(path).read_bytes(), dtype="<f8").reshape(-1, 2)
    psi = pairs[:, 0] + 1j * pairs[:, 1]
    num_qubits(psi)
    return psi
