import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density, random_pure, random_state
from thermolattice.lattice import LatticeSpec
from thermolattice.operators import build_family
from thermolattice.spectral import dephase, diagonalize
from thermolattice.states import (
    DensityOperator,
    StateError,
    ThermalState,
    basis_state,
    entropy,
    free_energy,
    local_distance,
    matched_beta,
    partial_trace,
    product_state,
    relative_entropy,
    thermal_state,
    trace_distance,
    trace_norm,
)


def naive_partial_trace(m: np.ndarray, n: int, keep: list[int]) -> np.ndarray:
    """Explicit index contraction over the traced sites (site 0 is the leading digit)."""
    k = len(keep)
    out = np.zeros((2**k, 2**k), dtype=complex)
    for a in range(2**n):
        for b in range(2**n):
            bits_a = [(a >> (n - 1 - i)) & 1 for i in range(n)]
            bits_b = [(b >> (n - 1 - i)) & 1 for i in range(n)]
            if any(bits_a[i] != bits_b[i] for i in range(n) if i not in keep):
                continue
            ra = int("".join(str(bits_a[i]) for i in keep), 2)
            rb = int("".join(str(bits_b[i]) for i in keep), 2)
            out[ra, rb] += m[a, b]
    return out


def qubit_sd(h=None):
    spec = LatticeSpec(1, 1)
    Z = np.diag([1.0, -1.0])
    return diagonalize(Z if h is None else h, spec=spec), spec


def tfim_sd(n=8, **params):
    spec = LatticeSpec(1, n)
    return diagonalize(build_family("tfim", {"J": 1.0, "h": 0.9, "hz": 0.3, **params}, spec)), spec


# --------------------------------------------------------------------------- validation


def test_density_validation():
    spec = LatticeSpec(1, 1)
    with pytest.raises(StateError):
        DensityOperator(np.diag([0.6, 0.6]), spec)
    with pytest.raises(StateError):
        DensityOperator(np.diag([1.2, -0.2]), spec)
    with pytest.raises(StateError):
        DensityOperator(np.array([[0.5, 0.1], [0.3, 0.5]]), spec)


def test_pure_state_is_lazy():
    spec = LatticeSpec(1, 3)
    rho = basis_state(spec, "010")
    assert rho.is_pure
    assert rho.matrix[2, 2] == 1 and np.trace(rho.matrix) == 1


# --------------------------------------------------------------------------- thermal states


def test_thermal_infinite_temperature():
    sd, spec = tfim_sd(4)
    th = thermal_state(sd, 0.0)
    assert np.allclose(th.matrix, np.eye(16) / 16)
    assert th.log_partition == pytest.approx(math.log(16))


def test_thermal_qubit_closed_form():
    sd, _ = qubit_sd()
    th = thermal_state(sd, 1.0)
    z = 2 * math.cosh(1.0)
    assert np.allclose(np.sort(np.diag(th.matrix).real), [math.exp(-1) / z, math.exp(1) / z])
    assert np.sort(np.diag(th.matrix).real)[1] == pytest.approx(0.8808, abs=1e-4)


def test_thermal_energy_is_log_partition_derivative():
    sd, _ = tfim_sd(8)
    beta, h = 0.5, 1e-4
    th = thermal_state(sd, beta)
    dlogz = (thermal_state(sd, beta + h).log_partition - thermal_state(sd, beta - h).log_partition) / (2 * h)
    assert sd.energy_expectation(th) == pytest.approx(-dlogz, abs=1e-6)


def test_thermal_matrix_matches_expm():
    from scipy.linalg import expm

    sd, spec = tfim_sd(4)
    H = sd.hamiltonian.dense
    rho = expm(-0.7 * H)
    rho /= np.trace(rho)
    assert np.allclose(thermal_state(sd, 0.7).matrix, rho, atol=1e-9)


def test_thermal_ground_space_limit():
    spec = LatticeSpec(1, 3)
    sd = diagonalize(build_family("classical_ising_field", {"J": 1.0, "h": 0.0}, spec))
    th = thermal_state(sd, math.inf)
    # ferromagnet: all-up and all-down
    assert np.allclose(np.diag(th.matrix)[[0, 7]], [0.5, 0.5])


def test_negative_beta_rejected():
    sd, _ = tfim_sd(3)
    with pytest.raises(ValueError):
        thermal_state(sd, -0.1)


def test_log_partition_overflow_safe():
    sd, _ = tfim_sd(4)
    th = thermal_state(sd, 5000.0)
    assert np.isfinite(th.log_partition)
    assert th.log_partition == pytest.approx(-5000.0 * sd.eigenvalues[0], rel=1e-9)


def test_matched_beta_round_trip():
    sd, _ = tfim_sd(6)
    for beta in (0.1, 0.7, 2.0):
        target = sd.energy_expectation(thermal_state(sd, beta))
        found, clamped = matched_beta(sd, target)
        assert not clamped
        assert found == pytest.approx(beta, rel=1e-6)
    assert matched_beta(sd, sd.eigenvalues[0] - 1) == (math.inf, True)
    assert matched_beta(sd, float(np.mean(sd.eigenvalues)))[0] == 0.0


# --------------------------------------------------------------------------- partial trace


def test_partial_trace_examples(rng):
    spec = LatticeSpec(1, 2)
    rho = random_state(spec, rng)
    assert np.allclose(partial_trace(rho, [0, 1]), rho.matrix)
    a = random_density(2, rng)
    b = random_density(2, rng)
    prod = DensityOperator(np.kron(a, b), spec)
    assert np.allclose(partial_trace(prod, [0]), a)
    assert np.allclose(partial_trace(prod, [1]), b)
    bell = DensityOperator.from_vector(np.array([1, 0, 0, 1]) / math.sqrt(2), spec)
    assert np.allclose(partial_trace(bell, [0]), np.eye(2) / 2)


@pytest.mark.parametrize("keep", [[0], [1], [2], [0, 2], [1, 2], [0, 1]])
def test_partial_trace_matches_naive_contraction(keep, rng):
    spec = LatticeSpec(1, 3)
    for _ in range(5):
        rho = random_state(spec, rng)
        assert np.abs(partial_trace(rho, keep) - naive_partial_trace(rho.matrix, 3, keep)).max() < 1e-12
        pure = random_pure(spec, rng)
        assert np.abs(partial_trace(pure, keep) - naive_partial_trace(pure.matrix, 3, keep)).max() < 1e-12


def test_product_state_constructor():
    spec = LatticeSpec(1, 2)
    up = np.array([1.0, 0.0])
    plus = np.array([1.0, 1.0]) / math.sqrt(2)
    rho = product_state(spec, [up, plus])
    assert np.allclose(rho.vector, np.kron(up, plus))


# --------------------------------------------------------------------------- distances and entropies


def test_trace_distance_examples():
    assert trace_distance(np.eye(2) / 2, np.eye(2) / 2) == 0
    assert trace_distance(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(1.0)
    assert trace_distance(np.diag([0.7, 0.3]), np.diag([0.4, 0.6])) == pytest.approx(0.3)
    assert trace_norm(np.diag([0.7, 0.3]) - np.diag([0.4, 0.6])) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        trace_distance(np.eye(2), np.eye(4))


@given(st.integers(0, 2**32 - 1))
def test_trace_distance_is_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_density(4, rng) for _ in range(3))
    assert trace_distance(a, b) == pytest.approx(trace_distance(b, a), abs=1e-12)
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-9
    assert 0 <= trace_distance(a, b) <= 1 + 1e-12


def test_local_distance_examples(rng):
    spec = LatticeSpec(1, 3)
    rho = random_state(spec, rng)
    assert local_distance(rho, rho, spec.region([0, 1])) == 0
    a = random_density(4, rng)
    s1, s2 = random_density(2, rng), random_density(2, rng)
    rho = DensityOperator(np.kron(a, s1), spec)
    tau = DensityOperator(np.kron(a, s2), spec)
    assert local_distance(rho, tau, spec.region([0, 1])) == pytest.approx(0, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_local_distance_oracle_and_monotone(seed):
    rng = np.random.default_rng(seed)
    spec = LatticeSpec(1, 3)
    rho, tau = random_state(spec, rng), random_state(spec, rng)
    keep = [0, 1]
    d = local_distance(rho, tau, spec.region(keep))
    oracle = trace_distance(naive_partial_trace(rho.matrix, 3, keep), naive_partial_trace(tau.matrix, 3, keep))
    assert d == pytest.approx(oracle, abs=1e-12)
    assert d <= trace_distance(rho.matrix, tau.matrix) + 1e-9


def test_entropy_examples(rng):
    spec = LatticeSpec(1, 3)
    assert entropy(random_pure(spec, rng)) == pytest.approx(0, abs=1e-10)
    assert entropy(DensityOperator.maximally_mixed(spec)) == pytest.approx(math.log(8))


def test_araki_lieb_and_subadditivity(rng):
    spec = LatticeSpec(1, 3)
    for _ in range(100):
        rho = random_state(spec, rng, rank=int(rng.integers(1, 9)))
        s = entropy(rho)
        sa = entropy(partial_trace(rho, [0]))
        sb = entropy(partial_trace(rho, [1, 2]))
        assert abs(sa - sb) <= s + 1e-9
        assert s <= sa + sb + 1e-9


def test_relative_entropy_examples(rng):
    spec = LatticeSpec(1, 3)
    rho = random_state(spec, rng)
    assert relative_entropy(rho, rho) == pytest.approx(0, abs=1e-10)
    assert relative_entropy(random_pure(spec, rng), DensityOperator.maximally_mixed(spec)) == pytest.approx(math.log(8))
    assert relative_entropy(rho, basis_state(spec, "000")) == math.inf


def test_relative_entropy_free_energy_identity():
    spec = LatticeSpec(1, 6)
    sd0 = diagonalize(build_family("transverse_field", {"b": 1.0}, spec))
    sd = diagonalize(build_family("tfim", {"J": 1.0, "h": 0.8, "hz": 0.3}, spec))
    rho = DensityOperator.from_vector(sd0.eigenvectors[:, 0], spec)
    avg = dephase(sd, rho)
    beta = 0.6
    th = thermal_state(sd, beta)
    lhs = relative_entropy(avg, th)
    rhs = beta * (free_energy(avg, sd, beta) - free_energy(th, sd, beta))
    assert lhs == pytest.approx(rhs, abs=1e-8)
    # the thermal fast path agrees with the general eigen-decomposition path
    generic = DensityOperator(th.matrix, spec)
    assert lhs == pytest.approx(relative_entropy(avg, generic), abs=1e-8)


@given(st.integers(0, 2**32 - 1))
def test_relative_entropy_data_processing(seed):
    rng = np.random.default_rng(seed)
    spec = LatticeSpec(1, 3)
    tau, sigma = random_state(spec, rng), random_state(spec, rng)
    full = relative_entropy(tau, sigma)
    assert full >= -1e-9
    red = relative_entropy(
        DensityOperator(partial_trace(tau, [0, 2]), LatticeSpec(1, 2)),
        DensityOperator(partial_trace(sigma, [0, 2]), LatticeSpec(1, 2)),
    )
    assert red <= full + 1e-9


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 3.0))
def test_thermal_state_minimizes_free_energy(seed, beta):
    rng = np.random.default_rng(seed)
    sd, spec = tfim_sd(3)
    rho = random_state(spec, rng)
    assert free_energy(thermal_state(sd, beta), sd, beta) <= free_energy(rho, sd, beta) + 1e-9
