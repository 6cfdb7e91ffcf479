"""Density operators, partial traces, distances and entropies (natural log)."""

from __future__ import annotations

import functools
import math
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .lattice import LatticeSpec, Region

if TYPE_CHECKING:
    from .spectral import SpectralData

TRACE_TOL = 1e-10
HERMITIAN_TOL = 1e-12
POSITIVITY_TOL = 1e-10
ENTROPY_CUTOFF = 1e-14
SUPPORT_CUTOFF = 1e-12
#: full validation (an eigendecomposition) is skipped above this dimension
VALIDATE_MAX_DIM = 1024


class StateError(ValueError):
    pass


class DensityOperator:
    """A mixed state of the full lattice.

    A pure state may be given as a vector; its matrix is then built lazily,
    and most operations use the vector directly.
    """

    def __init__(self, matrix: np.ndarray | None, spec: LatticeSpec, *, vector=None, validate=True):
        if matrix is None and vector is None:
            raise StateError("a density operator needs a matrix or a vector")
        self.spec = spec
        self._vector = None if vector is None else np.asarray(vector)
        if matrix is not None:
            self.__dict__["matrix"] = np.asarray(matrix)
        dim = spec.hilbert_dim
        if self._vector is not None:
            if self._vector.shape != (dim,):
                raise StateError(f"state vector has shape {self._vector.shape}, expected ({dim},)")
            if abs(np.vdot(self._vector, self._vector).real - 1) > TRACE_TOL:
                raise StateError("state vector is not normalized")
        else:
            m = self.matrix
            if m.shape != (dim, dim):
                raise StateError(f"density matrix has shape {m.shape}, expected ({dim}, {dim})")
            if validate:
                self._validate(m)

    @classmethod
    def from_vector(cls, psi, spec: LatticeSpec) -> "DensityOperator":
        return cls(None, spec, vector=psi)

    @classmethod
    def maximally_mixed(cls, spec: LatticeSpec) -> "DensityOperator":
        dim = spec.hilbert_dim
        out = cls(np.eye(dim) / dim, spec, validate=False)
        out.__dict__["eigenvalues"] = np.full(dim, 1.0 / dim)
        return out

    @staticmethod
    def _validate(m):
        if abs(np.trace(m).real - 1) > TRACE_TOL or abs(np.trace(m).imag) > TRACE_TOL:
            raise StateError(f"trace {np.trace(m)} differs from 1")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise StateError("density matrix is not Hermitian")
        if m.shape[0] <= VALIDATE_MAX_DIM and np.linalg.eigvalsh(m)[0] < -POSITIVITY_TOL:
            raise StateError("density matrix has a negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.spec.hilbert_dim

    @property
    def is_pure(self) -> bool:
        return self._vector is not None

    @property
    def vector(self):
        return self._vector

    @functools.cached_property
    def matrix(self) -> np.ndarray:
        v = self._vector
        return np.outer(v, v.conj())

    @functools.cached_property
    def eigenvalues(self) -> np.ndarray:
        if self.is_pure:
            ev = np.zeros(self.dim)
            ev[-1] = 1.0
            return ev
        return np.linalg.eigvalsh(self.matrix)


def product_state(spec: LatticeSpec, local_states: Sequence[np.ndarray]) -> DensityOperator:
    """Product of single-site vectors, site 0 first."""
    psi = functools.reduce(np.kron, [np.asarray(s) / np.linalg.norm(s) for s in local_states], np.ones(1))
    return DensityOperator.from_vector(psi, spec)


def basis_state(spec: LatticeSpec, bits: str | Sequence[int]) -> DensityOperator:
    digits = [int(c) for c in bits]
    if len(digits) != spec.num_sites:
        raise StateError(f"bitstring of length {len(digits)} for {spec.num_sites} sites")
    idx = 0
    for dgt in digits:
        idx = idx * spec.local_dim + dgt
    psi = np.zeros(spec.hilbert_dim)
    psi[idx] = 1.0
    return DensityOperator.from_vector(psi, spec)


def plus_state(spec: LatticeSpec) -> DensityOperator:
    """``|+>`` on every site."""
    dim = spec.hilbert_dim
    return DensityOperator.from_vector(np.full(dim, 1 / np.sqrt(dim)), spec)


# --------------------------------------------------------------------------- partial trace


def _tensor_perm(num_sites: int, keep: Sequence[int]):
    keep = list(keep)
    rest = [s for s in range(num_sites) if s not in keep]
    return keep, rest


def reduce_vector(psi: np.ndarray, spec: LatticeSpec, keep: Sequence[int]) -> np.ndarray:
    """Reduced matrix of a pure state on ``keep``, ordered as given."""
    keep, rest = _tensor_perm(spec.num_sites, keep)
    d = spec.local_dim
    t = np.asarray(psi).reshape((d,) * spec.num_sites)
    t = t.transpose(keep + rest).reshape(d ** len(keep), -1)
    return t @ t.conj().T


def reduce_matrix(m: np.ndarray, spec: LatticeSpec, keep: Sequence[int]) -> np.ndarray:
    """Reduced matrix of an operator on ``keep`` (sites ordered as given)."""
    keep, rest = _tensor_perm(spec.num_sites, keep)
    d, n = spec.local_dim, spec.num_sites
    if not rest:
        perm = keep + [n + k for k in keep]
        return np.asarray(m).reshape((d,) * (2 * n)).transpose(perm).reshape(m.shape)
    t = np.asarray(m).reshape((d,) * (2 * n))
    row = list(range(n))
    col = list(range(n, 2 * n))
    for r in rest:
        col[r] = row[r]
    out = [row[k] for k in keep] + [col[k] for k in keep]
    red = np.einsum(t, row + col, out, optimize=False)
    dk = d ** len(keep)
    return red.reshape(dk, dk)


def partial_trace(rho: DensityOperator, keep: Region | Sequence[int]) -> np.ndarray:
    """``tr_B[rho]`` for ``B`` the complement of ``keep``."""
    sites = keep.sites if isinstance(keep, Region) else tuple(keep)
    if rho.is_pure:
        return reduce_vector(rho.vector, rho.spec, sites)
    return reduce_matrix(rho.matrix, rho.spec, sites)


# --------------------------------------------------------------------------- distances


def trace_norm(a: np.ndarray) -> float | np.ndarray:
    """Sum of absolute eigenvalues of a Hermitian matrix (or a stack of them)."""
    return np.sum(np.abs(np.linalg.eigvalsh(a)), axis=-1)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float | np.ndarray:
    """Half the trace norm of ``a - b``; equals 1 for orthogonal pure states."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:]:
        raise StateError(f"dimension mismatch: {a.shape} vs {b.shape}")
    out = 0.5 * trace_norm(a - b)
    return float(out) if np.ndim(out) == 0 else out


def local_distance(rho: DensityOperator, tau: DensityOperator, s: Region) -> float:
    return trace_distance(partial_trace(rho, s), partial_trace(tau, s))


# --------------------------------------------------------------------------- entropies


def _entropy_from_eigs(ev: np.ndarray) -> float:
    ev = ev[ev > ENTROPY_CUTOFF]
    return float(-np.sum(ev * np.log(ev)))


def entropy(rho: DensityOperator | np.ndarray) -> float:
    """Von Neumann entropy in nats."""
    if isinstance(rho, DensityOperator):
        if rho.is_pure:
            return 0.0
        return _entropy_from_eigs(rho.eigenvalues)
    return _entropy_from_eigs(np.linalg.eigvalsh(rho))


def relative_entropy(tau: DensityOperator, sigma: DensityOperator) -> float:
    """``S(tau || sigma) = tr[tau ln tau] - tr[tau ln sigma]`` in nats.

    Returns ``inf`` when the support of ``tau`` is not contained in the support
    of ``sigma``; eigenvalues of ``sigma`` below ``1e-12`` of its largest one
    count as zero.
    """
    neg_ent = -entropy(tau)
    if isinstance(sigma, ThermalState) and np.isfinite(sigma.beta):
        # ln rho_beta = -beta H - ln Z on the full space
        cross = -sigma.beta * sigma.sd.energy_expectation(tau) - sigma.log_partition
        return float(neg_ent - cross)
    s_vals, s_vecs = np.linalg.eigh(sigma.matrix)
    cutoff = SUPPORT_CUTOFF * max(s_vals[-1], 0.0)
    supp = s_vals > cutoff
    if tau.is_pure:
        w = np.abs(s_vecs.conj().T @ tau.vector) ** 2
    else:
        w = np.real(np.einsum("ij,ji->i", s_vecs.conj().T, tau.matrix @ s_vecs))
    if np.sum(w[~supp]) > SUPPORT_CUTOFF:
        return math.inf
    cross = float(np.sum(w[supp] * np.log(s_vals[supp])))
    return float(neg_ent - cross)


def free_energy(rho: DensityOperator, sd: "SpectralData", beta: float) -> float:
    """``F(rho) = tr[H rho] - S(rho) / beta``."""
    return sd.energy_expectation(rho) - entropy(rho) / beta


# --------------------------------------------------------------------------- thermal states


class ThermalState(DensityOperator):
    """``exp(-beta H) / Z`` in the eigenbasis of ``H``."""

    def __init__(self, sd: "SpectralData", beta: float):
        self.sd = sd
        self.beta = float(beta)
        E = sd.eigenvalues
        if math.isinf(beta):
            ground = np.abs(E - E[0]) <= sd.tol_deg
            pops = ground / ground.sum()
            self.log_partition = -math.inf
        else:
            w = -beta * (E - E[0])
            pops = np.exp(w)
            total = pops.sum()
            pops = pops / total
            self.log_partition = float(-beta * E[0] + np.log(total))
        self.populations = pops
        self.spec = sd.spec
        self._vector = None
        self.__dict__["eigenvalues"] = np.sort(pops)

    @functools.cached_property
    def matrix(self) -> np.ndarray:
        V = self.sd.eigenvectors
        m = (V * self.populations) @ V.conj().T
        return (m + m.conj().T) / 2


def thermal_state(sd: "SpectralData", beta: float) -> ThermalState:
    """Gibbs state at inverse temperature ``beta``; ``beta = inf`` gives the normalized ground-space projector."""
    if beta < 0 or math.isnan(beta):
        raise StateError(f"inverse temperature must be >= 0, got {beta}")
    return ThermalState(sd, beta)


def matched_beta(sd: "SpectralData", energy: float, rtol: float = 1e-8) -> tuple[float, bool]:
    """Inverse temperature whose Gibbs energy equals ``energy``, by bisection.

    Returns ``(beta, clamped)``; energies at or above the infinite-temperature
    mean give ``beta = 0`` and energies at or below the ground energy give
    ``inf`` (both flagged as clamped).
    """
    E = sd.eigenvalues
    e_inf = float(np.mean(E))
    if energy >= e_inf:
        return 0.0, energy > e_inf + rtol * max(1.0, abs(e_inf))
    if energy <= E[0] + rtol * max(1.0, abs(E[0])):
        return math.inf, True

    def mean_energy(beta):
        w = np.exp(-beta * (E - E[0]))
        return float(np.dot(w, E) / w.sum())

    lo, hi = 0.0, 1.0
    while mean_energy(hi) > energy:
        lo, hi = hi, 2 * hi
        if hi > 1e12:
            return math.inf, True
    scale = max(1.0, abs(energy))
    while hi - lo > 1e-15 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        e = mean_energy(mid)
        if abs(e - energy) <= rtol * scale * 1e-3:
            return mid, False
        if e > energy:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), False
