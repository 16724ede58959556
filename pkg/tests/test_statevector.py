import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.optimize import minimize

from abqaoa.maxcut import build_cost_diagonal, generate_regular_graph, solve_exact
from abqaoa.statevector import (
    BiasFieldError,
    DimensionError,
    apply_cost_phase,
    apply_mixer,
    cost_from_samples,
    dump_state,
    evolve,
    evolve_batch,
    expect_cost,
    expect_z_all,
    fidelity_to_manifold,
    initial_state,
    load_state,
    mixer_matrix,
    sample_bitstrings,
    z_from_samples,
)
from oracles import X, Z, dense_evolve, hfree_qaoa
from test_maxcut import K4, SINGLE_EDGE

EDGE = build_cost_diagonal(SINGLE_EDGE)


def minus_state(n):
    return np.array([(-1) ** bin(z).count("1") for z in range(2**n)], dtype=complex) / 2 ** (n / 2)


def random_state(n, rng):
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return psi / np.linalg.norm(psi)


def small_graph(n, seed):
    if n == 2:
        return SINGLE_EDGE
    if n == 4 and seed % 2:
        return K4
    return generate_regular_graph(n, 3, weighted=True, rng_seed=seed)


# -- initial state -----------------------------------------------------------


@pytest.mark.parametrize("n", [1, 3, 6])
def test_zero_bias_is_minus_state(n):
    np.testing.assert_allclose(initial_state(np.zeros(n)), minus_state(n), atol=1e-15)


@pytest.mark.parametrize("h, z", [(1.0, 1 / math.sqrt(2)), (10.0, 10 / math.sqrt(101)), (-3.0, -3 / math.sqrt(10))])
def test_single_qubit_ground_state(h, z):
    psi = initial_state([h])
    # oracle: lowest eigenvector of the 2x2 operator
    evals, evecs = np.linalg.eigh(X - h * Z)
    assert abs(np.vdot(evecs[:, 0], psi)) == pytest.approx(1.0, abs=1e-12)
    assert expect_z_all(psi)[0] == pytest.approx(z, abs=1e-12)
    assert psi[0].real > 0 and psi[0].imag == 0


def test_large_bias_near_basis_state():
    assert expect_z_all(initial_state([10.0]))[0] == pytest.approx(0.995, abs=1e-3)


def test_unit_bias_all_qubits():
    np.testing.assert_allclose(expect_z_all(initial_state(np.ones(5))), 1 / math.sqrt(2), atol=1e-12)


def test_bias_guard():
    with pytest.raises(BiasFieldError):
        initial_state([11.0])
    with pytest.raises(BiasFieldError):
        initial_state([np.nan])


# -- layers ------------------------------------------------------------------


def test_cost_phase_identity_and_pi():
    rng = np.random.default_rng(0)
    psi = random_state(2, rng)
    np.testing.assert_array_equal(apply_cost_phase(psi, EDGE, 0.0), psi)
    out = apply_cost_phase(psi, EDGE, math.pi)
    expected = psi * np.exp(np.array([-1, 1, 1, -1]) * 1j * math.pi / 2)
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_cost_phase_keeps_probabilities():
    rng = np.random.default_rng(1)
    d = build_cost_diagonal(generate_regular_graph(8, 3, True, 1))
    psi = random_state(8, rng)
    np.testing.assert_allclose(np.abs(apply_cost_phase(psi, d, 0.37)), np.abs(psi), atol=1e-15)


def test_cost_phase_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_cost_phase(np.ones(8) / math.sqrt(8), EDGE, 0.1)


def test_mixer_identity():
    rng = np.random.default_rng(2)
    psi = random_state(3, rng)
    np.testing.assert_allclose(apply_mixer(psi, [0.3, -1.0, 2.0], 0.0), psi, atol=1e-15)


def test_mixer_pi_half_flips():
    out = apply_mixer(np.array([1, 0], dtype=complex), [0.0], math.pi / 2)
    np.testing.assert_allclose(out, [0, -1j], atol=1e-15)


def test_mixer_biased_quarter_turn():
    beta = math.pi / (2 * math.sqrt(2))
    expected = -1j * (X - Z) / math.sqrt(2)
    np.testing.assert_allclose(mixer_matrix(1.0, beta), expected, atol=1e-14)
    np.testing.assert_allclose(expm(-1j * beta * (X - Z)), expected, atol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_mixer_matrix_matches_expm(seed):
    rng = np.random.default_rng(seed)
    h, beta = rng.uniform(-10, 10), rng.uniform(-3, 3)
    np.testing.assert_allclose(mixer_matrix(h, beta), expm(-1j * beta * (X - h * Z)), atol=1e-12)


def test_mixer_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_mixer(np.ones(4) / 2, [0.0, 0.0, 0.0], 0.1)


# -- evolution ---------------------------------------------------------------


def test_level_zero_returns_initial_state():
    h = np.array([0.3, -0.7])
    np.testing.assert_allclose(evolve(EDGE, [], [], h), initial_state(h), atol=1e-15)


def test_schedule_length_mismatch():
    with pytest.raises(DimensionError):
        evolve(EDGE, [0.1, 0.2], [0.3])


def test_single_edge_level_one_reaches_ground():
    """Grid search then local refinement on the dense oracle; the fast path must agree."""

    def dense_energy(x):
        psi = dense_evolve(SINGLE_EDGE, [x[0]], [x[1]], [0.0, 0.0])
        return float(np.real(np.vdot(psi, EDGE.values * psi)))

    grid = np.linspace(-math.pi, math.pi, 41)
    start = min(((g, b) for g in grid for b in grid), key=dense_energy)
    best = minimize(dense_energy, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    assert best.fun == pytest.approx(-0.5, abs=1e-9)
    psi = evolve(EDGE, [best.x[0]], [best.x[1]])
    assert expect_cost(psi, EDGE) == pytest.approx(-0.5, abs=1e-9)


def test_norm_preserved_over_random_layers():
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(10):
        n = int(rng.integers(2, 9))
        d = build_cost_diagonal(small_graph(n if n % 2 == 0 else n + 1, trial))
        h = rng.uniform(-10, 10, d.n)
        gammas = rng.uniform(-4, 4, 100)
        betas = rng.uniform(-4, 4, 100)
        psi = evolve(d, gammas, betas, h)
        worst = max(worst, abs(np.linalg.norm(psi) - 1))
    assert worst < 1e-12


@pytest.mark.parametrize("seed", range(50))
def test_dense_oracle_equivalence(seed):
    rng = np.random.default_rng(seed)
    n = [2, 4][seed % 2]
    g = small_graph(n, seed)
    d = build_cost_diagonal(g)
    p = int(rng.integers(1, 4))
    gammas, betas = rng.uniform(-3, 3, p), rng.uniform(-3, 3, p)
    h = rng.uniform(-2, 2, n)
    fast = evolve(d, gammas, betas, h)
    slow = dense_evolve(g, gammas, betas, h)
    assert np.max(np.abs(fast - slow)) < 1e-10


def test_numpy_layers_match_batch_kernel():
    rng = np.random.default_rng(4)
    d = build_cost_diagonal(generate_regular_graph(8, 3, True, 4))
    h = rng.uniform(-1.5, 1.5, 8)
    gammas, betas = rng.uniform(-2, 2, (3, 4)), rng.uniform(-2, 2, (3, 4))
    batch = evolve_batch(d, gammas, betas, h)
    for row in range(3):
        psi = initial_state(h)
        for g, b in zip(gammas[row], betas[row]):
            psi = apply_mixer(apply_cost_phase(psi, d, g), h, b)
        np.testing.assert_allclose(batch[row], psi, atol=1e-12)


def test_cost_layers_commute():
    rng = np.random.default_rng(5)
    d = build_cost_diagonal(generate_regular_graph(8, 3, True, 5))
    psi = random_state(8, rng)
    a = apply_cost_phase(apply_cost_phase(psi, d, 0.3), d, -1.1)
    b = apply_cost_phase(apply_cost_phase(psi, d, -1.1), d, 0.3)
    assert np.max(np.abs(a - b)) <= 1e-15


@pytest.mark.parametrize("n", [4, 6, 8, 10])
def test_zero_bias_matches_unbiased_qaoa(n):
    rng = np.random.default_rng(n)
    d = build_cost_diagonal(generate_regular_graph(n, 3, True, n))
    gammas, betas = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
    np.testing.assert_allclose(evolve(d, gammas, betas, np.zeros(n)), hfree_qaoa(d.values, gammas, betas), atol=1e-12)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_minus_start_equals_flipped_plus_start(n):
    """Starting from |-> with (gamma, beta) equals the global Z flip of starting from |+> with (gamma, -beta)."""
    rng = np.random.default_rng(n + 10)
    d = build_cost_diagonal(small_graph(n, 2))
    gammas, betas = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
    plus = np.full(2**n, 2 ** (-n / 2), dtype=complex)
    for g, b in zip(gammas, betas):
        plus = apply_mixer(apply_cost_phase(plus, d, g), np.zeros(n), -b)
    flip = np.array([(-1) ** bin(z).count("1") for z in range(2**n)])
    np.testing.assert_allclose(evolve(d, gammas, betas), flip * plus, atol=1e-12)


# -- expectations ------------------------------------------------------------


def test_expect_cost_basis_and_uniform():
    d = build_cost_diagonal(generate_regular_graph(6, 3, True, 0))
    for z in (0, 5, 63):
        psi = np.zeros(64, dtype=complex)
        psi[z] = 1
        assert expect_cost(psi, d) == d.values[z]
    assert expect_cost(minus_state(6), d) == pytest.approx(0.0, abs=1e-14)


def test_expect_cost_bell_like():
    psi = np.array([0, 1, 1, 0], dtype=complex) / math.sqrt(2)
    assert expect_cost(psi, EDGE) == pytest.approx(-0.5)


def test_expect_z():
    psi = np.zeros(16, dtype=complex)
    psi[0] = 1
    np.testing.assert_array_equal(expect_z_all(psi), np.ones(4))
    np.testing.assert_allclose(expect_z_all(minus_state(4)), 0, atol=1e-15)


def test_fidelity():
    d = build_cost_diagonal(K4)
    sol = solve_exact(d)
    psi = np.zeros(16, dtype=complex)
    psi[sol.ground_indices[0]] = 1
    assert fidelity_to_manifold(psi, sol) == 1.0
    assert fidelity_to_manifold(minus_state(4), sol) == pytest.approx(6 / 16)
    psi = np.zeros(16, dtype=complex)
    psi[0] = 1
    assert fidelity_to_manifold(psi, sol) == 0.0


# -- sampling ----------------------------------------------------------------


def test_sampling_basis_state():
    psi = np.zeros(8, dtype=complex)
    psi[5] = 1
    assert set(sample_bitstrings(psi, 100, 0)) == {5}


def test_sampling_bernoulli_half():
    samples = sample_bitstrings(minus_state(1), 100_000, 1)
    assert abs(np.mean(samples == 0) - 0.5) < 0.01


def test_shot_estimators_converge():
    rng = np.random.default_rng(7)
    d = build_cost_diagonal(generate_regular_graph(6, 3, True, 7))
    psi = evolve(d, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 6))
    shots = 20_000
    samples = sample_bitstrings(psi, shots, 3)
    assert np.max(np.abs(z_from_samples(samples, 6) - expect_z_all(psi))) < 5 / math.sqrt(shots)
    assert abs(cost_from_samples(samples, d) - expect_cost(psi, d)) < 5 * d.e0 / math.sqrt(shots)


def test_sampling_rejects_zero_shots():
    with pytest.raises(ValueError):
        sample_bitstrings(minus_state(2), 0)


# -- dump format -------------------------------------------------------------


@pytest.mark.parametrize("text", [False, True])
def test_dump_round_trip(tmp_path, text):
    psi = random_state(5, np.random.default_rng(8))
    path = tmp_path / "psi.bin"
    dump_state(psi, path, text=text)
    np.testing.assert_array_equal(load_state(path, text=text), psi)


def test_dump_layout(tmp_path):
    psi = np.array([1 + 2j, 3 - 4j])
    path = tmp_path / "psi.bin"
    dump_state(psi, path)
    np.testing.assert_array_equal(np.frombuffer(path.read_bytes(), "<f8"), [1, 2, 3, -4])
