"""Eigendecomposition, energy-level groups, dephasing and time evolution."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import LatticeSpec, Region
from .states import DensityOperator, ThermalState, reduce_vector

MAX_DIM = 2**14
#: phase-matrix rows evaluated at once in trajectory sums
TIME_CHUNK = 256


class SpectralError(RuntimeError):
    pass


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` that keeps a real ``a`` real when ``b`` is complex."""
    # .real/.imag are strided views; matmul only reaches BLAS on contiguous input
    if not np.iscomplexobj(a) and np.iscomplexobj(b):
        return a @ np.ascontiguousarray(b.real) + 1j * (a @ np.ascontiguousarray(b.imag))
    if np.iscomplexobj(a) and not np.iscomplexobj(b):
        return np.ascontiguousarray(a.real) @ b + 1j * (np.ascontiguousarray(a.imag) @ b)
    return a @ b


@dataclass(eq=False)
class SpectralData:
    """Sorted spectrum, eigenvectors (columns) and contiguous degenerate groups."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    group_starts: np.ndarray
    tol_deg: float
    spec: LatticeSpec = field(repr=False)
    hamiltonian: object = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def num_levels(self) -> int:
        return len(self.group_starts)

    @functools.cached_property
    def group_ids(self) -> np.ndarray:
        ids = np.zeros(self.dim, dtype=np.int64)
        ids[self.group_starts[1:]] = 1
        return np.cumsum(ids)

    @property
    def level_groups(self) -> list[np.ndarray]:
        bounds = list(self.group_starts) + [self.dim]
        return [np.arange(bounds[i], bounds[i + 1]) for i in range(self.num_levels)]

    @functools.cached_property
    def multiplicities(self) -> np.ndarray:
        return np.diff(np.append(self.group_starts, self.dim))

    @functools.cached_property
    def level_energies(self) -> np.ndarray:
        """Mean energy of every level group."""
        return np.add.reduceat(self.eigenvalues, self.group_starts) / self.multiplicities

    @property
    def norm(self) -> float:
        return float(max(abs(self.eigenvalues[0]), abs(self.eigenvalues[-1])))

    @functools.cached_property
    def block_mask(self) -> np.ndarray:
        g = self.group_ids
        return g[:, None] == g[None, :]

    def smallest_gap(self) -> float:
        """Smallest nonzero difference between level energies (``nan`` with one level)."""
        if self.num_levels < 2:
            return math.nan
        return float(np.min(np.diff(self.level_energies)))

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        """Eigenbasis amplitudes ``<nu|psi>``."""
        return _mm(self.eigenvectors.conj().T, psi)

    def to_eigenbasis(self, m: np.ndarray) -> np.ndarray:
        V = self.eigenvectors
        return _mm(V.conj().T, _mm(m, V))

    def from_eigenbasis(self, m: np.ndarray) -> np.ndarray:
        V = self.eigenvectors
        return _mm(_mm(V, m), V.conj().T)

    def eigen_populations(self, rho: DensityOperator) -> np.ndarray:
        """``<nu|rho|nu>`` for every eigenvector."""
        if isinstance(rho, ThermalState) and rho.sd is self:
            return rho.populations
        if rho.is_pure:
            return np.abs(self.coefficients(rho.vector)) ** 2
        V = self.eigenvectors
        return np.real(np.sum(V.conj() * _mm(rho.matrix, V), axis=0))

    def level_populations(self, rho: DensityOperator) -> np.ndarray:
        """``tr[P_k rho]`` for every level group."""
        return np.add.reduceat(self.eigen_populations(rho), self.group_starts)

    def energy_expectation(self, rho: DensityOperator) -> float:
        return float(np.dot(self.eigen_populations(rho), self.eigenvalues))

    def energy_moments(self, rho: DensityOperator) -> tuple[float, float]:
        p = self.eigen_populations(rho)
        mean = float(np.dot(p, self.eigenvalues))
        var = float(np.dot(p, (self.eigenvalues - mean) ** 2))
        return mean, var


def _cluster_sorted(values: np.ndarray, tol: float) -> np.ndarray:
    """Start indices of single-linkage clusters of a sorted array."""
    if len(values) == 0:
        return np.zeros(0, dtype=np.int64)
    breaks = np.nonzero(np.diff(values) > tol)[0] + 1
    return np.concatenate([[0], breaks]).astype(np.int64)


def diagonalize(H, tol_deg: float | None = None, *, max_dim: int = MAX_DIM, spec: LatticeSpec | None = None) -> SpectralData:
    """Full eigendecomposition with degenerate levels grouped.

    ``H`` is a :class:`~thermolattice.operators.LocalHamiltonian` or a dense
    Hermitian matrix (then ``spec`` is required). Levels closer than
    ``tol_deg`` (default ``1e-10 * max(1, ||H||)``) are merged by single
    linkage on the sorted spectrum.
    """
    ham = None
    if hasattr(H, "dense"):
        spec = H.spec
        ham = H
        sparse = H.sparse
        if sparse.nnz == np.count_nonzero(sparse.diagonal()):
            # already diagonal (classical models): a stable sort is the eigendecomposition
            diag = np.real(sparse.diagonal())
            order = np.argsort(diag, kind="stable")
            E = diag[order]
            V = np.zeros((len(E), len(E)))
            V[order, np.arange(len(E))] = 1.0
            scale = max(1.0, float(np.max(np.abs(E), initial=0.0)))
            tol_deg = 1e-10 * scale if tol_deg is None else tol_deg
            return SpectralData(E, V, _cluster_sorted(E, tol_deg), float(tol_deg), spec, ham)
        m = H.dense
    else:
        m = np.asarray(H)
        if spec is None:
            raise SpectralError("a lattice spec is required for a raw matrix")
    dim = m.shape[0]
    if dim > max_dim:
        raise SpectralError(f"dimension {dim} exceeds the dense cap {max_dim}")
    if np.iscomplexobj(m) and not np.any(m.imag):
        m = m.real
    try:
        E, V = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver failed: {exc}") from exc
    scale = max(1.0, float(np.max(np.abs(E), initial=0.0)))
    if tol_deg is None:
        tol_deg = 1e-10 * scale
    return SpectralData(E, V, _cluster_sorted(E, tol_deg), float(tol_deg), spec, ham)


def check_residual(sd: SpectralData, H) -> float:
    """``max_nu ||H v_nu - E_nu v_nu|| / max(1, ||H||)``."""
    m = H.dense if hasattr(H, "dense") else np.asarray(H)
    r = _mm(m, sd.eigenvectors) - sd.eigenvectors * sd.eigenvalues
    return float(np.max(np.linalg.norm(r, axis=0)) / max(1.0, sd.norm))


# --------------------------------------------------------------------------- gap census


@dataclass
class GapCensus:
    """Multiplicities of signed gaps between distinct level groups."""

    most_degenerate_multiplicity: int
    gaps: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    weighted_multiplicity: int = 1
    num_levels: int = 1

    @property
    def D_G(self) -> int:
        return self.most_degenerate_multiplicity

    @property
    def vacuous(self) -> bool:
        """A single level: no gaps, no dynamics."""
        return self.num_levels < 2

    @property
    def gap_histogram(self) -> dict[float, int]:
        return {float(g): int(c) for g, c in zip(self.gaps, self.counts)}

    def top(self, k: int = 10) -> list[tuple[float, int]]:
        order = np.argsort(-self.counts, kind="stable")[:k]
        return [(float(self.gaps[i]), int(self.counts[i])) for i in order]

    def to_dict(self, top: int = 10) -> dict:
        return {
            "D_G": self.D_G,
            "D_G_rank_weighted": self.weighted_multiplicity,
            "num_levels": self.num_levels,
            "num_distinct_gaps": int(len(self.gaps)),
            "top_gaps": [[g, c] for g, c in self.top(top)],
        }


def _histogram(gaps: np.ndarray, weights: np.ndarray, tol: float):
    order = np.argsort(gaps, kind="stable")
    g, w = gaps[order], weights[order]
    starts = _cluster_sorted(g, tol)
    counts = np.add.reduceat(w, starts)
    reps = np.add.reduceat(g * w, starts) / counts
    return reps, counts


def gap_census(sd: SpectralData, tol_gap: float | None = None) -> GapCensus:
    """Degeneracy of the most degenerate nonzero energy gap.

    Gaps run over ordered pairs of distinct level groups, each pair counted
    once. The variant weighted by projector ranks is kept alongside. A single
    level has no gaps and ``D_G = 1`` by convention.
    """
    if tol_gap is None:
        tol_gap = 1e-9 * max(1.0, sd.norm)
    levels = sd.level_energies
    k = len(levels)
    if k < 2:
        return GapCensus(1, np.zeros(0), np.zeros(0, dtype=np.int64), 1, k)
    # positive gaps only: the census is symmetric under G -> -G
    iu, ju = np.triu_indices(k, 1)
    pos = levels[ju] - levels[iu]
    reps, counts = _histogram(pos, np.ones(len(pos), dtype=np.int64), tol_gap)
    mult = sd.multiplicities
    _, wcounts = _histogram(pos, (mult[iu] * mult[ju]).astype(np.int64), tol_gap)
    del iu, ju, pos
    gaps = np.concatenate([-reps[::-1], reps])
    counts_all = np.concatenate([counts[::-1], counts]).astype(np.int64)
    return GapCensus(int(counts.max()), gaps, counts_all, int(wcounts.max()), k)


def brute_force_gap_census(energies: Sequence[float], tol: float) -> int:
    """Reference census by direct enumeration of all ordered pairs of distinct levels."""
    levels = []
    for e in sorted(energies):
        if not levels or e - levels[-1][-1] > tol:
            levels.append([e])
        else:
            levels[-1].append(e)
    reps = [float(np.mean(l)) for l in levels]
    gaps = sorted(a - b for a in reps for b in reps if a is not b and a != b)
    best, run = (1 if gaps else 1), 1
    for x, y in zip(gaps, gaps[1:]):
        run = run + 1 if y - x <= tol else 1
        best = max(best, run)
    return best


# --------------------------------------------------------------------------- state maps


def effective_dimension(sd: SpectralData, rho: DensityOperator) -> tuple[float, float]:
    """``(d_eff, 1/d_eff)`` with ``1/d_eff = sum_k tr[P_k rho]^2``."""
    p = sd.level_populations(rho)
    inverse = float(np.dot(p, p))
    d_eff = 1.0 / inverse
    if d_eff > sd.num_levels + 1e-6:
        raise SpectralError(f"d_eff={d_eff} exceeds the number of levels {sd.num_levels}")
    return d_eff, inverse


def _group_vectors(sd: SpectralData, c: np.ndarray) -> np.ndarray:
    """Columns ``P_k psi`` for every level group, given eigenbasis amplitudes ``c``."""
    return np.add.reduceat(sd.eigenvectors * c, sd.group_starts, axis=1)


def dephase(sd: SpectralData, rho: DensityOperator) -> DensityOperator:
    """Infinite-time average ``sum_k P_k rho P_k``."""
    if isinstance(rho, ThermalState) and rho.sd is sd:
        return rho
    if rho.is_pure:
        c = sd.coefficients(rho.vector)
        W = _group_vectors(sd, c)
        m = W @ W.conj().T
        eig = np.sort(np.concatenate([np.abs(np.add.reduceat(np.abs(c) ** 2, sd.group_starts)), np.zeros(sd.dim - sd.num_levels)]))
    else:
        rt = sd.to_eigenbasis(rho.matrix) * sd.block_mask
        m = sd.from_eigenbasis(rt)
        eig = _block_eigenvalues(sd, rt)
    m = (m + m.conj().T) / 2
    out = DensityOperator(m, rho.spec, validate=False)
    out.__dict__["eigenvalues"] = eig
    return out


def _block_eigenvalues(sd: SpectralData, rt: np.ndarray) -> np.ndarray:
    out = []
    bounds = list(sd.group_starts) + [sd.dim]
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a == 1:
            out.append(np.real(rt[a:b, a]))
        else:
            out.append(np.linalg.eigvalsh(rt[a:b, a:b]))
    return np.sort(np.concatenate(out))


def dephased_spectrum(sd: SpectralData, rho: DensityOperator) -> np.ndarray:
    """Eigenvalues of ``sum_k P_k rho P_k`` without forming it in the lattice basis."""
    if (isinstance(rho, ThermalState) and rho.sd is sd) or rho.is_pure:
        p = sd.level_populations(rho) if rho.is_pure else sd.eigen_populations(rho)
        return np.sort(p)
    return _block_eigenvalues(sd, sd.to_eigenbasis(rho.matrix))


def evolve(sd: SpectralData, rho: DensityOperator, t: float) -> DensityOperator:
    """``exp(-iHt) rho exp(iHt)``."""
    phase = np.exp(-1j * sd.eigenvalues * t)
    V = sd.eigenvectors
    if rho.is_pure:
        return DensityOperator.from_vector(_mm(V, phase * sd.coefficients(rho.vector)), rho.spec)
    rt = sd.to_eigenbasis(rho.matrix)
    rt = phase[:, None] * rt * phase.conj()[None, :]
    m = sd.from_eigenbasis(rt)
    out = DensityOperator((m + m.conj().T) / 2, rho.spec, validate=False)
    return out


def heisenberg_time_average(sd: SpectralData, A: np.ndarray) -> np.ndarray:
    """Infinite-time average of ``exp(iHt) A exp(-iHt)``, i.e. ``sum_k P_k A P_k``."""
    m = sd.from_eigenbasis(sd.to_eigenbasis(np.asarray(A)) * sd.block_mask)
    return (m + m.conj().T) / 2


def default_horizon(sd: SpectralData, cap: float = 1e7) -> float:
    """``200 * 2 pi / g_min`` capped at ``cap``; 1 if there is a single level."""
    g = sd.smallest_gap()
    if not np.isfinite(g) or g <= 0:
        return 1.0
    return float(min(200 * 2 * math.pi / g, cap))


def kronecker_times(T: float, samples: int, seed: int) -> np.ndarray:
    """Low-discrepancy times in ``[0, T)``: golden-ratio additive recurrence with a seeded offset."""
    offset = np.random.default_rng(seed).random()
    inv_phi = (math.sqrt(5) - 1) / 2
    return T * np.mod(offset + inv_phi * np.arange(1, samples + 1), 1.0)


# --------------------------------------------------------------------------- reduced trajectories


def _pure_components(rho: DensityOperator, max_rank: int):
    """``(weights, vectors)`` of a low-rank state, or ``None`` when the rank exceeds ``max_rank``."""
    if rho.is_pure:
        return np.ones(1), rho.vector[:, None]
    if isinstance(rho, ThermalState):
        return None
    w, U = np.linalg.eigh(rho.matrix)
    keep = w > 1e-14
    if keep.sum() > max_rank:
        return None
    return w[keep], U[:, keep]


def _region_rows(spec: LatticeSpec, sites: Sequence[int]) -> np.ndarray:
    """Row indices grouped as ``[local config of sites, rest]``."""
    d, n = spec.local_dim, spec.num_sites
    idx = np.arange(spec.hilbert_dim).reshape((d,) * n)
    rest = [s for s in range(n) if s not in sites]
    return idx.transpose(list(sites) + rest).reshape(d ** len(sites), -1)


class ReducedDynamics:
    """Reduced states ``tr_B[rho(t)]`` on a fixed set of regions.

    Three evaluation routes. A state block-diagonal in the energy levels is
    stationary. Otherwise either the pure components of ``rho`` are evolved
    (cheap for pure or low-rank states) or the eigenbasis kernels
    ``rho~ o Q~^T`` of every matrix unit ``Q`` of a region are summed against
    the phases (cheap for full-rank states on small regions).
    """

    def __init__(self, sd: SpectralData, rho: DensityOperator, regions: Sequence[Region]):
        self.sd = sd
        self.rho = rho
        self.regions = list(regions)
        self._dephased = None
        ncomp = sum(r.dim * (r.dim + 1) // 2 for r in self.regions)
        if isinstance(rho, ThermalState) and rho.sd is sd:
            self.route = "stationary"
            return
        self._comps = _pure_components(rho, max_rank=max(1, ncomp))
        if self._comps is not None:
            self._coeffs = sd.coefficients(self._comps[1])
            self.route = "pure"
            return
        self._rt = sd.to_eigenbasis(rho.matrix)
        off = np.max(np.abs(self._rt[~sd.block_mask]), initial=0.0)
        self.route = "stationary" if off < 1e-13 else "kernel"

    def _stationary(self) -> list[np.ndarray]:
        from .states import partial_trace

        return [partial_trace(self.rho, r) for r in self.regions]

    def _kernels(self, region: Region):
        V = self.sd.eigenvectors
        blocks = [V[r] for r in _region_rows(self.sd.spec, region.sites)]
        for a in range(region.dim):
            for b in range(a, region.dim):
                q = _mm(blocks[b].conj().T, blocks[a])
                yield a, b, self._rt * q.T

    def dephased(self) -> list[np.ndarray]:
        """Reduced states of the infinite-time average on every region."""
        if self._dephased is not None:
            return self._dephased
        sd = self.sd
        out = []
        if self.route == "stationary":
            out = self._stationary()
        elif self.route == "pure":
            w, _ = self._comps
            for region in self.regions:
                acc = 0
                for i, wi in enumerate(w):
                    W = _group_vectors(sd, self._coeffs[:, i])
                    acc = acc + wi * _reduce_columns(W, sd.spec, region.sites)
                out.append(acc)
        else:
            self.at_times(np.zeros(0))
            return self._dephased
        self._dephased = out
        return out

    def at_times(self, times: np.ndarray) -> list[np.ndarray]:
        """Stacks ``(len(times), d_S, d_S)`` of reduced states, one per region."""
        sd = self.sd
        times = np.asarray(times, dtype=float)
        nt = len(times)
        if self.route == "stationary":
            return [np.broadcast_to(m, (nt,) + m.shape).copy() for m in self.dephased()]
        out = [np.zeros((nt, r.dim, r.dim), dtype=complex) for r in self.regions]
        chunks = [times[lo : lo + TIME_CHUNK] for lo in range(0, nt, TIME_CHUNK)]
        if self.route == "pure":
            w, _ = self._comps
            lo = 0
            for tc in chunks:
                phases = np.exp(-1j * np.outer(tc, sd.eigenvalues))
                for i, wi in enumerate(w):
                    psi_t = _mm(sd.eigenvectors, (phases * self._coeffs[:, i]).T)
                    for j, region in enumerate(self.regions):
                        out[j][lo : lo + len(tc)] += wi * _reduce_batch(psi_t, sd.spec, region.sites)
                lo += len(tc)
            return out
        mask = sd.block_mask
        dephased = []
        for j, region in enumerate(self.regions):
            avg = np.zeros((region.dim, region.dim), dtype=complex)
            for a, b, k in self._kernels(region):
                avg[a, b] = np.sum(k[mask])
                avg[b, a] = np.conj(avg[a, b])
                lo = 0
                for tc in chunks:
                    phases = np.exp(-1j * np.outer(tc, sd.eigenvalues))
                    vals = np.sum(_mm(phases, k) * phases.conj(), axis=1)
                    out[j][lo : lo + len(tc), a, b] = vals
                    if a != b:
                        out[j][lo : lo + len(tc), b, a] = vals.conj()
                    lo += len(tc)
            dephased.append(avg)
        self._dephased = dephased
        return out


def _reduce_columns(W: np.ndarray, spec: LatticeSpec, sites: Sequence[int]) -> np.ndarray:
    """``sum_k tr_B |w_k><w_k|`` over the columns of ``W``."""
    rows = _region_rows(spec, sites)
    X = W[rows]  # (dS, dB, K)
    X = X.reshape(X.shape[0], -1)
    return X @ X.conj().T


def _reduce_batch(psi_t: np.ndarray, spec: LatticeSpec, sites: Sequence[int]) -> np.ndarray:
    rows = _region_rows(spec, sites)
    X = psi_t[rows]  # (dS, dB, t)
    return np.einsum("abt,cbt->tac", X, X.conj(), optimize=True)


def reduced_trajectory(sd: SpectralData, rho: DensityOperator, region: Region, times) -> np.ndarray:
    return ReducedDynamics(sd, rho, [region]).at_times(times)[0]
