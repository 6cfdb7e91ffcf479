"""Measurable premises: energy variance, correlation decay, spectral CDFs,
time-averaged local distances and the transport diagnostic."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .lattice import Region, distance
from .operators import LocalHamiltonian, embed_sparse, operator_norm
from .report import PROVED, BoundReport, default_conventions, digest
from .spectral import (
    ReducedDynamics,
    SpectralData,
    default_horizon,
    effective_dimension,
    heisenberg_time_average,
    kronecker_times,
)
from .states import DensityOperator, ThermalState, partial_trace, trace_distance, trace_norm

log = logging.getLogger(__name__)


class DegenerateGaussianError(ValueError):
    """The energy distribution has zero variance, so the Gaussian CDF is a step."""


# --------------------------------------------------------------------------- variance


@dataclass
class VarianceReport:
    mean_energy: float
    sigma_sq: float
    s: float
    specific_heat: float | None = None


def energy_variance(
    rho: DensityOperator,
    H: LocalHamiltonian | None = None,
    *,
    sd: SpectralData | None = None,
    beta: float | None = None,
) -> VarianceReport:
    """``sigma^2 = tr[rho H^2] - tr[rho H]^2`` and ``s = sigma / sqrt(N)``.

    With ``sd`` the moments come from eigenbasis populations, which makes the
    result identical for ``rho`` and its time average. ``specific_heat`` is
    filled for thermal states (or when ``beta`` is given).
    """
    if isinstance(rho, ThermalState):
        sd = sd or rho.sd
        beta = rho.beta if beta is None else beta
    if sd is not None:
        mean, var = sd.energy_moments(rho)
    else:
        m = H.dense
        if rho.is_pure:
            hpsi = m @ rho.vector
            mean = float(np.vdot(rho.vector, hpsi).real)
            second = float(np.vdot(hpsi, hpsi).real)
        else:
            rh = rho.matrix @ m
            mean = float(np.real(np.trace(rh)))
            second = float(np.real(np.sum(rh * m.T)))
        var = second - mean**2
    if var < -1e-9:
        raise ValueError(f"negative energy variance {var}")
    n_sites = rho.spec.num_sites
    s = math.sqrt(max(var, 0.0) / n_sites)
    c = None if beta is None or math.isinf(beta) else beta**2 * s**2
    return VarianceReport(mean, var, s, c)


# --------------------------------------------------------------------------- correlations


@dataclass
class CorrelationSample:
    distance: int
    lower: float
    upper: float
    x: tuple[int, ...] = ()
    y: tuple[int, ...] = ()


@dataclass
class CorrelationFit:
    samples: list[CorrelationSample]
    xi_hat: float
    K_hat: float
    fit_quality: float
    degenerate: bool = False
    notes: dict = field(default_factory=lambda: {"operators": "Hermitian P, Q with unit operator norm"})

    def to_dict(self) -> dict:
        return {
            "samples": [vars(s) for s in self.samples],
            "xi_hat": self.xi_hat,
            "K_hat": self.K_hat,
            "fit_quality": self.fit_quality,
            "degenerate": self.degenerate,
            "notes": self.notes,
        }


def _hermitian_sign(m: np.ndarray) -> np.ndarray:
    """Unit-norm Hermitian ``P`` maximizing ``tr[P m]``; zero eigenvalues map to +1."""
    w, u = np.linalg.eigh((m + m.conj().T) / 2)
    return (u * np.where(w >= 0, 1.0, -1.0)) @ u.conj().T


def _random_unit_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = a + a.conj().T
    return h / np.max(np.abs(np.linalg.eigvalsh(h)))


def correlation_bracket(
    delta: np.ndarray, dx: int, dy: int, *, sweeps: int = 50, starts: int = 8, seed: int = 0
) -> tuple[float, float]:
    """Bracket ``[lower, upper]`` for ``max |tr[delta (P (x) Q)]|`` over unit-norm Hermitian ``P, Q``.

    ``upper`` is the trace norm of ``delta``; ``lower`` is the best value of an
    alternating maximization from ``starts`` random ``Q``.
    """
    upper = float(trace_norm(delta))
    t = delta.reshape(dx, dy, dx, dy)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        q = _random_unit_hermitian(dy, rng)
        prev = -1.0
        val = 0.0
        for _ in range(sweeps):
            mq = np.einsum("abcd,db->ac", t, q)
            p = _hermitian_sign(mq)
            mp = np.einsum("abcd,ca->bd", t, p)
            q = _hermitian_sign(mp)
            val = abs(np.real(np.einsum("abcd,ca,db->", t, p, q)))
            if prev >= 0 and abs(val - prev) <= 1e-8 * max(val, 1e-300):
                break
            prev = val
        best = max(best, val)
    return min(best, upper), upper


def correlation_fit(
    rho: DensityOperator,
    region_pairs: Sequence[tuple[Region, Region]],
    iters: int = 50,
    *,
    starts: int = 8,
    seed: int = 0,
) -> CorrelationFit:
    """Connected-correlator brackets per region pair and a log-linear fit of the lower curve.

    Each sample is divided by ``|X||Y|``. The fit uses, per distance, the
    largest lower bound; ``ln(lower) = ln(K) - dist / xi``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    spec = rho.spec
    samples = []
    for idx, (x, y) in enumerate(region_pairs):
        if x.intersects(y):
            raise ValueError(f"regions {x.sites} and {y.sites} overlap")
        sites = list(x.sites) + list(y.sites)
        rxy = partial_trace(rho, sites)
        rx = partial_trace(rho, x)
        ry = partial_trace(rho, y)
        delta = rxy - np.kron(rx, ry)
        lo, up = correlation_bracket(delta, x.dim, y.dim, sweeps=iters, starts=starts, seed=seed + idx)
        norm = len(x) * len(y)
        samples.append(CorrelationSample(distance(spec, x, y), lo / norm, up / norm, x.sites, y.sites))
    return _fit(samples)


def _fit(samples: list[CorrelationSample], floor: float = 1e-13) -> CorrelationFit:
    env: dict[int, float] = {}
    for s in samples:
        env[s.distance] = max(env.get(s.distance, 0.0), s.lower)
    pts = sorted((d, v) for d, v in env.items() if v > floor)
    if len(pts) < 2:
        return CorrelationFit(samples, math.nan, 0.0 if not pts else pts[0][1], math.nan, True)
    d = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(d, y, 1)
    pred = intercept + slope * d
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    if slope >= 0:
        return CorrelationFit(samples, math.inf, float(math.exp(intercept)), r2, True)
    return CorrelationFit(samples, float(-1.0 / slope), float(math.exp(intercept)), r2, False)


def single_site_pairs(spec, anchor: int = 0) -> list[tuple[Region, Region]]:
    return [(spec.region([anchor]), spec.region([j])) for j in range(spec.num_sites) if j != anchor]


# --------------------------------------------------------------------------- spectral CDFs


@dataclass
class SpectralCDFs:
    jump_points: np.ndarray
    F_values: np.ndarray
    gauss_mean: float
    gauss_sigma: float
    delta: float
    argmax: float = math.nan

    def G(self, x) -> np.ndarray:
        return ndtr((np.asarray(x) - self.gauss_mean) / self.gauss_sigma)

    def F(self, x) -> np.ndarray:
        idx = np.searchsorted(self.jump_points, np.asarray(x), side="right")
        vals = np.concatenate([[0.0], self.F_values])
        return vals[idx]

    def summary(self) -> dict:
        return {
            "num_jumps": int(len(self.jump_points)),
            "gauss_mean": self.gauss_mean,
            "gauss_sigma": self.gauss_sigma,
            "delta": self.delta,
            "argmax": self.argmax,
        }


def spectral_cdfs(sd: SpectralData, rho: DensityOperator) -> SpectralCDFs:
    """Energy CDF of ``rho`` against the Gaussian with the same mean and variance.

    ``delta = sup_x |F(x) - G(x)|`` is attained at a jump of the step function
    ``F``, so it is evaluated at both one-sided limits of every level.
    """
    p = sd.level_populations(rho)
    E = sd.level_energies
    mean = float(np.dot(p, E))
    var = float(np.dot(p, (E - mean) ** 2))
    if var <= 1e-12 * max(1.0, sd.norm) ** 2:
        raise DegenerateGaussianError(
            f"energy variance {var:.3g} is zero: degenerate Gaussian (G collapses to a step)"
        )
    sigma = math.sqrt(var)
    F_right = np.minimum(np.cumsum(p), 1.0)
    F_left = F_right - p
    G = ndtr((E - mean) / sigma)
    gaps = np.maximum(np.abs(F_right - G), np.abs(F_left - G))
    k = int(np.argmax(gaps))
    return SpectralCDFs(E.copy(), F_right, mean, sigma, float(gaps[k]), float(E[k]))


def effective_dimension_bound_check(sd: SpectralData, rho: DensityOperator, tol: float = 1e-9) -> BoundReport:
    """``1/d_eff <= 2 Delta``; constant-free, so a failure means a bug."""
    _, inv = effective_dimension(sd, rho)
    cdf = spectral_cdfs(sd, rho)
    rhs = 2 * cdf.delta
    return BoundReport(
        name="effective_dimension_berry_esseen",
        lhs=inv,
        rhs=rhs,
        holds=inv <= rhs + tol,
        convention_notes=default_conventions(),
        inputs_digest=digest(sd.eigenvalues, sd.level_populations(rho)),
        kind=PROVED,
        tolerance=tol,
        details={"delta": cdf.delta, "sigma": cdf.gauss_sigma, "mean": cdf.gauss_mean},
    )


# --------------------------------------------------------------------------- time averages


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    T: float
    converged: bool = True
    estimate_2T: float = math.nan
    times: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    values: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def summary(self) -> dict:
        return {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "T": self.T,
            "converged": self.converged,
            "estimate_2T": self.estimate_2T,
            "samples": int(len(self.times)),
        }


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(np.sum(values) / n)
    if n < 2:
        return mean, math.nan
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def mc_local_distances(
    sd: SpectralData,
    rho0: DensityOperator,
    regions: Sequence[Region],
    targets: Sequence[np.ndarray | DensityOperator] | str,
    samples: int = 2000,
    T: float | None = None,
    *,
    seed: int = 0,
    check_convergence: bool = True,
    dynamics: ReducedDynamics | None = None,
) -> list[MCEstimate]:
    """Time averages of ``||rho(t) - tau||_S`` for several regions from one trajectory.

    ``targets`` holds one reduced matrix (or full state) per region, or the
    string ``"dephased"`` for the time-average state itself. Times follow a
    seeded low-discrepancy sequence on ``[0, T]``; with ``check_convergence``
    a second estimate on ``[0, 2T]`` flags results whose two estimates differ
    by more than three combined standard errors.
    """
    if samples < 2:
        raise ValueError("need at least two time samples")
    if T is None:
        T = default_horizon(sd)
    if T <= 0:
        raise ValueError("horizon T must be positive")
    dyn = dynamics or ReducedDynamics(sd, rho0, regions)
    if isinstance(targets, str):
        if targets != "dephased":
            raise ValueError(f"unknown target {targets!r}")
        reduced_targets = dyn.dephased()
    else:
        reduced_targets = [
            partial_trace(t, r) if isinstance(t, DensityOperator) else np.asarray(t) for t, r in zip(targets, regions)
        ]
    times = kronecker_times(T, samples, seed)
    stacks = dyn.at_times(times)
    results = []
    second = dyn.at_times(kronecker_times(2 * T, samples, seed + 1)) if check_convergence else None
    for j, target in enumerate(reduced_targets):
        vals = trace_distance(stacks[j], target[None, :, :])
        est, se = _mean_stderr(vals)
        res = MCEstimate(est, se, T, True, math.nan, times, vals)
        if second is not None:
            est2, se2 = _mean_stderr(trace_distance(second[j], target[None, :, :]))
            res.estimate_2T = est2
            tol = 3 * math.sqrt(se**2 + se2**2) + 1e-12
            res.converged = abs(est - est2) <= tol
            if not res.converged:
                log.warning("time average over region %s not converged: %.3g vs %.3g", regions[j].sites, est, est2)
        results.append(res)
    return results


def mc_average_distance(
    sd: SpectralData,
    rho0: DensityOperator,
    target: DensityOperator | np.ndarray,
    S: Region,
    samples: int = 2000,
    T: float | None = None,
    *,
    seed: int = 0,
    check_convergence: bool = True,
) -> MCEstimate:
    """Estimate ``lim (1/T) int_0^T ||rho(t) - target||_S dt``."""
    return mc_local_distances(sd, rho0, [S], [target], samples, T, seed=seed, check_convergence=check_convergence)[0]


# --------------------------------------------------------------------------- transport


def transport_diagnostic(sd: SpectralData, U_S: np.ndarray, A_S: np.ndarray, region: Region) -> float:
    """``||[U_S, <A_S>]||`` with ``<A_S>`` the Heisenberg-picture time average."""
    spec = sd.spec
    A = embed_sparse(A_S, region.sites, spec).toarray()
    avg = heisenberg_time_average(sd, A)
    U = embed_sparse(U_S, region.sites, spec)
    comm = U @ avg - (U.T @ avg.T).T
    return operator_norm(np.asarray(comm))


def transport_epsilon(
    sd: SpectralData, rho: DensityOperator, channels: Sequence, S: Region
) -> tuple[float, list[list[float]]]:
    """``max_{i,j} ||<Phi_i(rho)> - <Phi_j(rho)>||_S`` over a family of local channels."""
    from .operators import apply_channel

    reduced = []
    for ch in channels:
        dyn = ReducedDynamics(sd, apply_channel(ch, rho), [S])
        reduced.append(dyn.dephased()[0])
    k = len(reduced)
    table = [[float(trace_distance(reduced[i], reduced[j])) for j in range(k)] for i in range(k)]
    return max((max(r) for r in table), default=0.0), table
