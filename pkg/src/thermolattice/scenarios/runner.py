"""Scenario drivers: quench, local-channel re-thermalization, perturbation, diagnostics, certification."""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy

from .. import __version__
from ..bounds import (
    BoundsError,
    Lemma3Params,
    lemma1_pipeline,
    lemma3_certify,
    lemma3_conclusion,
    lemma3_min_N,
    lemma3_verify,
    lpsw_bounds,
    theorem1_premises,
    theorem2_premises,
    thermalization_bound,
    time_average_relative_entropy,
)
from ..diagnostics import (
    CorrelationFit,
    DegenerateGaussianError,
    MCEstimate,
    SpectralCDFs,
    VarianceReport,
    correlation_fit,
    energy_variance,
    mc_local_distances,
    single_site_pairs,
    spectral_cdfs,
    transport_diagnostic,
    transport_epsilon,
)
from ..lattice import LatticeSpec, Region, cubic_subsystems
from ..operators import (
    NUMBER,
    PAULIS,
    LocalHamiltonian,
    apply_channel,
    build_family,
    family_scale,
    local_field_terms,
    make_channel,
    operator_norm,
)
from ..report import PREMISES, PROVED, BoundReport, canonical_json, digest, to_jsonable
from ..spectral import ReducedDynamics, SpectralData, dephase, diagonalize, effective_dimension, gap_census
from ..states import DensityOperator, basis_state, matched_beta, plus_state, thermal_state
from .config import ScenarioConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# exit codes of a run
OK, PROVED_BOUND_FAILED, PREMISE_FAILED = 0, 2, 3


@dataclass
class SizeResult:
    """Everything computed at one lattice size."""

    n: int
    N: int
    metrics: dict[str, Any] = field(default_factory=dict)
    reports: list[BoundReport] = field(default_factory=list)
    variance: VarianceReport | None = None
    fits: dict[str, CorrelationFit] = field(default_factory=dict)
    cdfs: SpectralCDFs | None = None
    spectrum: dict[str, np.ndarray] = field(default_factory=dict)
    levels: dict[str, np.ndarray] = field(default_factory=dict)
    traces: dict[str, MCEstimate] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "metrics": self.metrics,
            "variance": self.variance,
            "correlation_fits": {k: v.to_dict() for k, v in self.fits.items()},
            "spectral_cdfs": self.cdfs.summary() if self.cdfs is not None else None,
            "bound_reports": [r.to_dict() for r in self.reports],
            "mc_summaries": {k: v.summary() for k, v in self.traces.items()},
            "notes": self.notes,
        }


@dataclass
class RunRecord:
    scenario: str
    config: dict
    results: list[SizeResult] = field(default_factory=list)
    frontier: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def config_digest(self) -> str:
        return digest(config=self.config)

    @property
    def versions(self) -> dict[str, str]:
        return {"thermolattice": __version__, "numpy": np.__version__, "scipy": scipy.__version__}

    def reports(self):
        for r in self.results:
            yield from r.reports

    def status(self) -> int:
        """``0`` if every proved bound held, ``2`` if one failed, ``3`` if only premises failed."""
        reps = list(self.reports())
        if any(r.kind == PROVED and not r.holds for r in reps):
            return PROVED_BOUND_FAILED
        if any(not r.premises_ok or (r.kind == PREMISES and not r.holds) for r in reps):
            return PREMISE_FAILED
        return OK

    def to_dict(self) -> dict:
        """The JSON document; wall time is left out so equal inputs give equal bytes."""
        return to_jsonable(
            {
                "schema_version": SCHEMA_VERSION,
                "scenario": self.scenario,
                "config": self.config,
                "config_digest": self.config_digest,
                "versions": self.versions,
                "results": [r.to_dict() for r in self.results],
                "frontier": self.frontier,
                "status": self.status(),
            }
        )

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


# --------------------------------------------------------------------------- building blocks


def size_seed(seed: int, n: int) -> int:
    """Per-size seed, so a sweep's results do not depend on its order."""
    return int(np.random.SeedSequence([seed, n]).generate_state(1)[0])


def lattice_for(cfg: ScenarioConfig, n: int) -> LatticeSpec:
    lat = cfg.lattice
    return LatticeSpec(lat["dim"], n, lat.get("local_dim", 2), lat.get("metric", "manhattan"), lat.get("periodic", False))


def _family(entry: dict, spec: LatticeSpec, scale: float | None = None) -> LocalHamiltonian:
    return build_family(entry["family"], entry.get("params", {}), spec, scale=scale)


def _natural_scale(entry: dict, spec: LatticeSpec) -> float:
    return family_scale(entry["family"], entry.get("params", {}), spec)


def _regions(cfg: ScenarioConfig, spec: LatticeSpec, notes: list[str]) -> list[Region]:
    explicit = cfg.subsystem.get("regions") or []
    out = []
    for sites in explicit:
        if max(sites) >= spec.num_sites:
            notes.append(f"region {sites} does not fit N={spec.num_sites}; skipped")
            continue
        out.append(spec.region(sites))
    return out or cubic_subsystems(spec, cfg.subsystem.get("l", 1))


def _is_cube(region: Region) -> bool:
    spec = region.spec
    side = round(len(region) ** (1 / spec.dim))
    if side**spec.dim != len(region):
        return False
    return any(c.sites == region.sites for c in cubic_subsystems(spec, side))


def _state(cfg: ScenarioConfig, spec: LatticeSpec, sd: SpectralData, notes: list[str]) -> DensityOperator:
    st = cfg.state
    kind = st["kind"]
    if kind == "ground":
        if sd.multiplicities[0] > 1:
            notes.append(f"ground space is {int(sd.multiplicities[0])}-fold degenerate; using the lowest-index eigenvector")
        return DensityOperator.from_vector(sd.eigenvectors[:, 0], spec)
    if kind == "thermal":
        return thermal_state(sd, st["beta"])
    if kind == "plus":
        return plus_state(spec)
    bits = st.get("bits", "")
    if len(bits) != spec.num_sites:
        bits = (bits * spec.num_sites)[: spec.num_sites] if bits else "0" * spec.num_sites
        notes.append(f"bitstring tiled to {bits}")
    return basis_state(spec, bits)


def _spectrum_table(sd: SpectralData, rho: DensityOperator) -> dict[str, np.ndarray]:
    return {"energy": sd.eigenvalues, "group_id": sd.group_ids, "population": sd.eigen_populations(rho)}


def _level_table(sd: SpectralData, rho: DensityOperator, cdfs: SpectralCDFs | None) -> dict[str, np.ndarray]:
    table = {
        "energy": sd.level_energies,
        "multiplicity": sd.multiplicities.astype(int),
        "population": sd.level_populations(rho),
    }
    if cdfs is not None:
        table["F"] = cdfs.F(sd.level_energies)
        table["G"] = cdfs.G(sd.level_energies)
    return table


def _spectral_block(res: SizeResult, sd: SpectralData, rho: DensityOperator, fit: CorrelationFit | None = None):
    """Variance, census, effective dimension and the constant-free effective-dimension check."""
    res.variance = energy_variance(rho, sd=sd)
    census = gap_census(sd)
    d_eff, inv = effective_dimension(sd, rho)
    res.metrics.update(
        {
            "hilbert_dim": sd.dim,
            "num_levels": sd.num_levels,
            "D_G": census.D_G,
            "D_G_rank_weighted": census.weighted_multiplicity,
            "d_eff": d_eff,
            "sigma_sq": res.variance.sigma_sq,
            "s": res.variance.s,
            "scale": getattr(sd.hamiltonian, "scale", 1.0),
        }
    )
    try:
        res.cdfs = spectral_cdfs(sd, rho)
        rep = lemma1_pipeline(sd, rho, fit)
        res.reports.append(rep)
        res.metrics["delta"] = res.cdfs.delta
        res.metrics["lemma1_scaling_ratio"] = rep.details["scaling_ratio"]
    except DegenerateGaussianError as exc:
        res.notes.append(f"spectral CDF comparison skipped: {exc}")
    res.spectrum = _spectrum_table(sd, rho)
    res.levels = _level_table(sd, rho, res.cdfs)
    return census


def _thermalization(res, sd, rho, beta, cfg, seed, fit, extra_regions=()):
    an = cfg.analysis
    try:
        rep = thermalization_bound(
            sd,
            rho,
            beta,
            cfg.subsystem.get("l", 1),
            an["alpha"],
            samples=an["samples"],
            T=an.get("T_override"),
            seed=seed,
            fit=fit,
            extra_regions=extra_regions,
        )
    except BoundsError as exc:
        res.notes.append(f"thermalization bound skipped: {exc}")
        return None
    res.reports.append(rep)
    res.metrics.update(
        {
            "thermalization_lhs": rep.lhs,
            "equilibration_term": rep.details["equilibration_term"],
            "thermal_distance_term": rep.details["thermal_distance_term"],
            "relative_entropy": rep.details["relative_entropy"],
        }
    )
    return rep


# --------------------------------------------------------------------------- scenarios


def quench_size(cfg: ScenarioConfig, n: int) -> SizeResult:
    spec = lattice_for(cfg, n)
    seed = size_seed(cfg.seed, n)
    res = SizeResult(n, spec.num_sites)
    H0 = _family(cfg.hamiltonians["initial"], spec)
    H = _family(cfg.hamiltonians["final"], spec)
    sd0, sd = diagonalize(H0), diagonalize(H)
    rho = _state(cfg, spec, sd0, res.notes)
    fit = correlation_fit(rho, single_site_pairs(spec), cfg.analysis["correlation_iters"], seed=seed)
    res.fits["initial_state"] = fit
    _spectral_block(res, sd, rho, fit)

    regions = _regions(cfg, spec, res.notes)
    an = cfg.analysis
    ests = mc_local_distances(sd, rho, regions, "dephased", an["samples"], an.get("T_override"), seed=seed)
    for r, e in zip(regions, ests):
        res.traces["dephased_" + "-".join(map(str, r.sites))] = e
    lp = lpsw_bounds(sd, rho, regions, seed=seed, estimates=ests)
    res.reports.extend(lp)
    res.metrics["lpsw_max_lhs"] = max(r.lhs for r in lp)
    res.metrics["lpsw_min_rhs"] = min(r.rhs for r in lp)

    beta, clamped = matched_beta(sd, sd.energy_expectation(rho))
    res.metrics["beta"] = beta
    if clamped:
        res.notes.append(f"energy matching clamped beta to {beta}")
    if math.isfinite(beta):
        th = thermal_state(sd, beta)
        th_fit = correlation_fit(th, single_site_pairs(spec), an["correlation_iters"], seed=seed)
        res.fits["thermal"] = th_fit
        _thermalization(res, sd, rho, beta, cfg, seed, th_fit)
    return res


def rethermalize_size(cfg: ScenarioConfig, n: int) -> SizeResult:
    spec = lattice_for(cfg, n)
    seed = size_seed(cfg.seed, n)
    res = SizeResult(n, spec.num_sites)
    H = _family(cfg.hamiltonians["final"], spec)
    sd = diagonalize(H)
    beta = float(cfg.state["beta"])
    th = thermal_state(sd, beta)
    chc = cfg.channel
    support = spec.region(chc["sites"])
    if not _is_cube(support):
        log.warning("channel support %s is not a cube; proceeding", support.sites)
        res.notes.append(f"channel support {list(support.sites)} is not a cube")
    ch = make_channel(chc["name"], support, chc.get("params"))
    rho = apply_channel(ch, th)
    an = cfg.analysis
    th_fit = correlation_fit(th, single_site_pairs(spec), an["correlation_iters"], seed=seed)
    res.fits["thermal"] = th_fit
    res.fits["kicked"] = correlation_fit(rho, single_site_pairs(spec), an["correlation_iters"], seed=seed)
    res.metrics["beta"] = beta

    t1 = theorem1_premises(sd, beta, ch)
    res.reports.append(t1)
    res.metrics["theorem1_lhs"] = t1.lhs
    res.metrics["theorem1_rhs"] = t1.rhs
    res.metrics["variance_gap"] = t1.details["variance_gap"]
    census = _spectral_block(res, sd, rho)

    extra = [support] + [r for r in _regions(cfg, spec, res.notes) if r.sites != support.sites]
    rep = _thermalization(res, sd, rho, beta, cfg, seed, th_fit, extra_regions=extra)
    if rep is not None:
        site = rep.details["regions"][0]
        res.metrics["channel_region_distance"] = site["lhs"]
        res.metrics["channel_region_stderr"] = site["lhs_stderr"]

    # subsystem-average certificate on the time average against the thermal state
    l = cfg.subsystem.get("l", 1)
    rel = time_average_relative_entropy(sd, rho, beta)
    cert = None
    if not th_fit.degenerate:
        try:
            p = Lemma3Params(spec.dim, spec.num_sites, l, an["alpha"], th_fit.xi_hat, max(th_fit.K_hat, 0.0))
            cert = lemma3_certify(p, rel)
            res.reports.append(cert)
        except BoundsError as exc:
            res.notes.append(f"subsystem-average certificate skipped: {exc}")
    ver = lemma3_verify(dephase(sd, rho), th, l, an["alpha"], certificate=cert)
    res.reports.append(ver)
    res.metrics["lemma3_average"] = ver.lhs
    res.metrics["lemma3_conclusion"] = ver.rhs
    return res


def _perturbed_pair(cfg: ScenarioConfig, spec: LatticeSpec) -> tuple[LocalHamiltonian, LocalHamiltonian]:
    ham = cfg.hamiltonians
    init = ham["initial"]
    scale = _natural_scale(init, spec)
    if "final" in ham:
        scale = max(scale, _natural_scale(ham["final"], spec))
    H0 = _family(init, spec, scale)
    H = _family(ham["final"], spec, scale) if "final" in ham else H0
    pert = ham.get("perturbation")
    if pert:
        N = spec.num_sites
        c = float(pert["strength"])
        if pert.get("aggregate_exponent") is not None:
            c = c * N ** pert["aggregate_exponent"] / N
        coeffs = np.full(N, c)
        if pert.get("disorder_seed") is not None:
            coeffs = coeffs * np.random.default_rng(pert["disorder_seed"]).uniform(-1, 1, N)
        extra = LocalHamiltonian(local_field_terms(spec, coeffs, pert.get("pauli", "Z"), scale=scale), spec, scale=scale)
        H = H + extra
    return H0, H


def perturb_size(cfg: ScenarioConfig, n: int) -> SizeResult:
    spec = lattice_for(cfg, n)
    seed = size_seed(cfg.seed, n)
    res = SizeResult(n, spec.num_sites)
    H0, H = _perturbed_pair(cfg, spec)
    sd0, sd = diagonalize(H0), diagonalize(H)
    beta = float(cfg.state["beta"])
    rho = thermal_state(sd0, beta)
    an = cfg.analysis
    t2 = theorem2_premises(sd, H0, beta)
    res.reports.append(t2)
    res.metrics.update(
        {
            "beta": beta,
            "norm_H_minus_H0": t2.details["norm_H_minus_H0"],
            "theorem2_lhs": t2.lhs,
            "theorem2_rhs": t2.rhs,
            "duhamel_error": abs(t2.details["log_Z_direct"] - t2.details["log_Z_quadrature"]),
            "relative_entropy_threshold_exponent": (1 - (2 + spec.dim) * an["alpha"]) / (spec.dim + 1),
        }
    )
    th_fit = correlation_fit(thermal_state(sd, beta), single_site_pairs(spec), an["correlation_iters"], seed=seed)
    res.fits["thermal"] = th_fit
    _spectral_block(res, sd, rho)
    _thermalization(res, sd, rho, beta, cfg, seed, th_fit)
    return res


def _site_index(spec: LatticeSpec, site) -> int:
    if site == "center":
        return spec.index([spec.n // 2] * spec.dim)
    return int(site)


_OBSERVABLES = {"number": NUMBER, **PAULIS}


def diagnostics_size(cfg: ScenarioConfig, n: int) -> SizeResult:
    spec = lattice_for(cfg, n)
    seed = size_seed(cfg.seed, n)
    res = SizeResult(n, spec.num_sites)
    H = _family(cfg.hamiltonians["final"], spec)
    sd = diagonalize(H)
    rho = _state(cfg, spec, sd, res.notes)
    fit = correlation_fit(rho, single_site_pairs(spec), cfg.analysis["correlation_iters"], seed=seed)
    res.fits["state"] = fit
    _spectral_block(res, sd, rho, fit)
    tr = cfg.transport
    if tr is not None:
        site = spec.region([_site_index(spec, tr.get("site", "center"))])
        A = _OBSERVABLES[tr.get("observable", "number")]
        U = PAULIS[tr.get("unitary", "Z")]
        res.metrics["transport_commutator"] = transport_diagnostic(sd, U, A, site)
        res.metrics["transport_site"] = site.sites[0]
    if cfg.channel is not None:
        base = cfg.channel["sites"]
        channels = []
        for shift in range(spec.num_sites):
            sites = [s + shift for s in base]
            if max(sites) < spec.num_sites:
                channels.append(make_channel(cfg.channel["name"], spec.region(sites), cfg.channel.get("params")))
        S = spec.region(base)
        eps, table = transport_epsilon(sd, rho, channels, S)
        res.metrics["transport_epsilon"] = eps
        res.metrics["transport_epsilon_table"] = table
    return res


def _sweep(fn: Callable[[ScenarioConfig, int], SizeResult]):
    def run(cfg: ScenarioConfig) -> RunRecord:
        t0 = time.perf_counter()
        rec = RunRecord(cfg.scenario, cfg.to_dict())
        for n in cfg.sizes:
            log.info("%s: n=%d", cfg.scenario, n)
            rec.results.append(fn(cfg, n))
        rec.wall_time = time.perf_counter() - t0
        return rec

    run.__name__ = fn.__name__.replace("_size", "")
    run.__doc__ = f"Run ``{fn.__name__}`` over every size of the sweep."
    return run


run_quench = _sweep(quench_size)
run_rethermalize = _sweep(rethermalize_size)
run_perturb = _sweep(perturb_size)
run_diagnostics = _sweep(diagnostics_size)


def run_certify(cfg: ScenarioConfig) -> RunRecord:
    """Premise frontier of the subsystem-average certificate: the smallest ``N`` per parameter combination."""
    t0 = time.perf_counter()
    grid = cfg.certify or {}
    keys = ("d", "alpha", "l", "xi", "K")
    axes = [grid.get(k) or ([1] if k in ("d", "l") else [1.0] if k in ("xi", "K") else [cfg.analysis["alpha"]]) for k in keys]
    combos = list(itertools.product(*axes))
    if not combos:
        raise ValueError("empty certify grid")
    base = grid.get("log_base", "e")
    d_loc = grid.get("d_loc", 2)
    rec = RunRecord("certify", cfg.to_dict())
    for d, alpha, l, xi, K in combos:
        row = {"d": d, "alpha": alpha, "l": l, "xi": xi, "K": K, "d_loc": d_loc, "log_base": base}
        try:
            p = Lemma3Params(d, 2.0, l, alpha, xi, K, d_loc)
        except BoundsError as exc:
            row.update(min_N=None, conclusion_at_min_N=None, error=str(exc))
            rec.frontier.append(row)
            continue
        n_min = lemma3_min_N(p, base)
        row["min_N"] = n_min
        row["conclusion_at_min_N"] = lemma3_conclusion(p.with_N(n_min)) if math.isfinite(n_min) else 0.0
        row["checks"] = [
            lemma3_certify(p.with_N(float(N)), 0.0, base).to_dict() for N in grid.get("N", [])
        ]
        rec.frontier.append(row)
    rec.wall_time = time.perf_counter() - t0
    return rec


RUNNERS: dict[str, Callable[[ScenarioConfig], RunRecord]] = {
    "quench": run_quench,
    "rethermalize": run_rethermalize,
    "perturb": run_perturb,
    "diagnostics": run_diagnostics,
    "certify": run_certify,
}


def run_scenario(cfg: ScenarioConfig) -> RunRecord:
    return RUNNERS[cfg.scenario](cfg)
