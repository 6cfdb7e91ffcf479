"""Acceptance suite: one test per criterion, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py`` to get a pass/fail line per criterion
in the terminal summary.
"""

import functools
import itertools
import json
import math

import numpy as np
import pytest

from conftest import random_pure, random_state
from test_states import naive_partial_trace
from thermolattice.bounds import (
    Lemma3Params,
    coarse_graining_bound,
    lemma3_min_N,
    lpsw_bounds,
    theorem1_premises,
    theorem2_premises,
)
from thermolattice.diagnostics import effective_dimension_bound_check, transport_diagnostic
from thermolattice.lattice import LatticeSpec
from thermolattice.operators import CHANNELS, NUMBER, Z, LocalHamiltonian, build_family, family_scale
from thermolattice.operators import local_field_terms, magnetization, make_channel
from thermolattice.scenarios import load_config, run_scenario
from thermolattice.scenarios.cli import main
from thermolattice.scenarios.config import EXAMPLES
from thermolattice.spectral import (
    default_horizon,
    dephase,
    diagonalize,
    effective_dimension,
    evolve,
    kronecker_times,
)
from thermolattice.states import DensityOperator, partial_trace, plus_state, product_state, thermal_state

TFIM = {"J": 1.0, "h": 0.9, "hz": 0.3}


@functools.lru_cache(maxsize=None)
def _diag(family, params, n):
    spec = LatticeSpec(1, n)
    return diagonalize(build_family(family, dict(params), spec))


def spectrum(family, n, **params):
    return _diag(family, tuple(sorted(params.items())), n)


def random_product(spec, rng):
    vecs = []
    for _ in range(spec.num_sites):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        vecs.append(v / np.linalg.norm(v))
    return product_state(spec, vecs)


def ground(family, n, **params):
    sd = spectrum(family, n, **params)
    return DensityOperator.from_vector(sd.eigenvectors[:, 0], sd.spec)


# --------------------------------------------------------------------------- 1


@pytest.mark.criterion(1, "1/d_eff <= 2 Delta for 200 product and 24 thermal states, N = 6..12")
def test_criterion_1_effective_dimension_surrogate():
    rng = np.random.default_rng(2024)
    models = [("tfim", TFIM), ("xx_chain", {"J": 1.0, "mu": 0.3})]
    betas = (0.1, 0.4, 1.0)
    checked = {"product": 0, "thermal": 0}
    for (family, params), n in itertools.product(models, (6, 8, 10, 12)):
        sd = spectrum(family, n, **params)
        for _ in range(25):
            rep = effective_dimension_bound_check(sd, random_product(sd.spec, rng), tol=1e-9)
            assert rep.holds, (family, n, rep.lhs, rep.rhs)
            checked["product"] += 1
        for beta in betas:
            rep = effective_dimension_bound_check(sd, thermal_state(sd, beta), tol=1e-9)
            assert rep.holds, (family, n, beta, rep.lhs, rep.rhs)
            checked["thermal"] += 1
    assert checked["product"] >= 200 and checked["thermal"] >= 20


# --------------------------------------------------------------------------- 2

QUENCHES = [
    (("transverse_field", {"b": 1.0}), ("tfim", {"J": 1.0, "g": 1.0, "hz": 0.1})),
    (("transverse_field", {"b": 1.0}), ("tfim", TFIM)),
    (("transverse_field", {"b": 1.0}), ("classical_ising_field", {"J": 1.0, "h": 0.7})),
    (("tfim", {"J": 1.0, "g": 2.0}), ("tfim", {"J": 1.0, "g": 1.0, "hz": 0.1})),
    (("tfim", {"J": 1.0, "h": 0.5, "hz": 0.2}), ("tfim", {"J": 1.0, "h": 1.2, "hz": 0.1})),
    (("heisenberg", {"J": 1.0}), ("tfim", TFIM)),
    (("tfim", {"J": 1.0, "g": 2.0}), ("heisenberg", {"J": 1.0, "h": 0.3})),
]


@pytest.mark.criterion(2, "MC D_S(<rho>) <= equilibration bound + 3 stderr, 21 quenches, 1- and 2-site S")
def test_criterion_2_equilibration_bound():
    count = 0
    for (ini, fin), n in itertools.product(QUENCHES, (6, 8, 10)):
        rho = ground(ini[0], n, **ini[1])
        sd = spectrum(fin[0], n, **fin[1])
        regions = [sd.spec.region([0]), sd.spec.region([0, 1])]
        reps = lpsw_bounds(sd, rho, regions, samples=2000, seed=n)
        for rep in reps:
            stderr = rep.details["mc"]["stderr"]
            assert rep.tolerance == pytest.approx(3 * stderr)
            assert rep.lhs <= rep.rhs + 3 * stderr, (ini, fin, n, rep.details["region"], rep.lhs, rep.rhs)
            assert rep.holds
        count += 1
    assert count >= 20


# --------------------------------------------------------------------------- 3


CHANNEL_PARAMS = {"depolarizing": {"p": 1.0}, "amplitude_damping": {"gamma": 0.5}, "unitary_kick": {"unitary": "X"}}


@pytest.mark.criterion(3, "S(<Phi(rho_b)>||rho_b) <= 2b||H_A|| + 2|A| ln 2, 5 channels x 3 b x N = 6,8,10")
def test_criterion_3_theorem1_premise():
    assert len(CHANNELS) == 5
    violations = []
    for name, beta, n in itertools.product(CHANNELS, (0.2, 0.5, 1.0), (6, 8, 10)):
        sd = spectrum("tfim", n, **TFIM)
        ch = make_channel(name, sd.spec.region([n // 2]), CHANNEL_PARAMS.get(name))
        rep = theorem1_premises(sd, beta, ch)
        if not rep.lhs <= rep.rhs + 1e-8:
            violations.append((name, beta, n, rep.lhs, rep.rhs))
    assert violations == []


# --------------------------------------------------------------------------- 4


def _perturbations(spec):
    """Ten ``(H0, H)`` pairs sharing one rescale factor."""
    n = spec.num_sites
    rng = np.random.default_rng(n)
    base = {"J": 1.0, "h": 0.9, "hz": 0.3}
    out = []

    def family_pair(p0, p1, family="tfim"):
        scale = max(family_scale(family, p0, spec), family_scale(family, p1, spec))
        return build_family(family, p0, spec, scale=scale), build_family(family, p1, spec, scale=scale)

    def field_pair(coeffs, pauli):
        scale = max(family_scale("tfim", base, spec), 1.0 + float(np.max(np.abs(coeffs))))
        H0 = build_family("tfim", base, spec, scale=scale)
        return H0, H0 + LocalHamiltonian(local_field_terms(spec, coeffs, pauli, scale=scale), spec, scale=scale)

    out.append(family_pair(base, {**base, "h": 0.95}))
    out.append(family_pair(base, {**base, "J": 1.1}))
    out.append(family_pair(base, {**base, "hz": 0.0}))
    out.append(family_pair({"J": 1.0, "h": 0.3}, {"J": 1.0, "h": 0.35}, "heisenberg"))
    out.append(field_pair(np.full(n, 0.05), "X"))
    out.append(field_pair(np.full(n, 0.05), "Y"))
    out.append(field_pair(rng.uniform(-0.1, 0.1, n), "Z"))
    out.append(field_pair(np.full(n, 0.01 * n**0.3 / n), "X"))
    kick = np.zeros(n)
    kick[0] = 0.5
    out.append(field_pair(kick, "X"))
    out.append(field_pair(rng.uniform(-0.05, 0.05, n), "Y"))
    return out


@pytest.mark.criterion(4, "S(<rho>||rho_b) <= 2b||H-H0|| for 10 perturbations, Duhamel ln Z within 1e-6")
def test_criterion_4_theorem2_premise():
    beta = 0.5
    for n in (6, 8, 10):
        spec = LatticeSpec(1, n)
        pairs = _perturbations(spec)
        assert len(pairs) == 10
        for k, (H0, H) in enumerate(pairs):
            rep = theorem2_premises(diagonalize(H), H0, beta)
            assert rep.lhs <= rep.rhs + 1e-8, (n, k, rep.lhs, rep.rhs)
            err = abs(rep.details["log_Z_direct"] - rep.details["log_Z_quadrature"])
            assert err <= 1e-6, (n, k, err)


# --------------------------------------------------------------------------- 5


@pytest.mark.criterion(5, "quench to diagonal Ising+field: d_eff <= #levels, #levels ~ c N^2 with R^2 >= 0.99")
def test_criterion_5_diagonal_quench_levels():
    sizes = np.array([6, 8, 10, 12])
    levels = []
    for n in sizes:
        spec = LatticeSpec(1, int(n))
        sd = diagonalize(build_family("classical_ising_field", {"J": 1.0, "h": 0.7}, spec))
        rho0 = ground("transverse_field", int(n), b=1.0)
        assert np.allclose(np.abs(rho0.vector), np.abs(plus_state(spec).vector), atol=1e-10)
        d_eff, _ = effective_dimension(sd, rho0)
        assert d_eff <= sd.num_levels + 1e-9
        assert sd.num_levels == len(np.unique(np.round(np.diag(sd.hamiltonian.dense).real, 9)))
        levels.append(sd.num_levels)
    y = np.array(levels, dtype=float)
    x = sizes.astype(float) ** 2
    c = float(x @ y / (x @ x))
    r2 = 1 - np.sum((y - c * x) ** 2) / np.sum((y - y.mean()) ** 2)
    print(f"levels={levels} c={c:.4f} R2={r2:.5f}")
    assert r2 >= 0.99


# --------------------------------------------------------------------------- 6


@pytest.mark.criterion(6, "XX chain ||[U_S,<A_S>]|| vs N log-log slope in [-1.3, -0.7]")
def test_criterion_6_transport_slope():
    sizes = np.array([6, 8, 10, 12])
    values = []
    for n in sizes:
        sd = spectrum("xx_chain", int(n), J=1.0)
        site = sd.spec.region([int(n) // 2])
        values.append(transport_diagnostic(sd, Z, NUMBER, site))
    slope = np.polyfit(np.log(sizes), np.log(values), 1)[0]
    print(f"commutators={values} slope={slope:.4f}")
    assert -1.3 <= slope <= -0.7


# --------------------------------------------------------------------------- 7


@pytest.mark.criterion(7, "dephase vs 1e4-sample time average (5 stderr); partial trace vs naive (1e-12)")
def test_criterion_7_oracles():
    rng = np.random.default_rng(77)
    sd = spectrum("tfim", 3, **TFIM)
    for _ in range(3):
        rho = random_state(sd.spec, rng)
        times = kronecker_times(default_horizon(sd), 10_000, seed=int(rng.integers(1 << 30)))
        samples = np.stack([evolve(sd, rho, t).matrix for t in times])
        mean = samples.mean(axis=0)
        stderr = np.abs(samples.std(axis=0)) / math.sqrt(len(times))
        diff = np.abs(mean - dephase(sd, rho).matrix)
        # entries the average kills exactly have zero spread; allow rounding there
        assert np.all(diff <= 5 * stderr + 1e-12)

    spec = LatticeSpec(1, 3)
    subsets = [[0], [1], [2], [0, 1], [0, 2], [1, 2], [0, 1, 2]]
    for k in range(50):
        rho = random_state(spec, rng) if k % 2 else random_pure(spec, rng)
        keep = subsets[k % len(subsets)]
        assert np.abs(partial_trace(rho, keep) - naive_partial_trace(rho.matrix, 3, keep)).max() <= 1e-12


# --------------------------------------------------------------------------- 8


@pytest.mark.criterion(8, "coarse-grained magnetization inequality, 100 random pairs, tol 1e-9")
def test_criterion_8_coarse_graining():
    rng = np.random.default_rng(8)
    violations = 0
    for k in range(100):
        spec = LatticeSpec(1, 3 + k % 3)
        rho = random_state(spec, rng, rank=1 + k % 4)
        tau = random_state(spec, rng)
        rep = coarse_graining_bound(magnetization(spec), rho, tau, tol=1e-9)
        violations += not rep.holds
    assert violations == 0


# --------------------------------------------------------------------------- 9


@pytest.mark.criterion(9, "certificate frontier in (1e6, 1e7); subsystem average emitted for every rethermalize run")
def test_criterion_9_lemma3(tmp_path):
    n_min = lemma3_min_N(Lemma3Params(d=1, N=2, l=1, alpha=0.2, xi=1.0, K=1.0), log_base="e")
    assert 1e6 < n_min < 1e7

    raw = json.loads(json.dumps(EXAMPLES["rethermalize"]))
    raw["analysis"].update(size_sweep=[6, 8], samples=100)
    rec = run_scenario(load_config(raw))
    for res in rec.results:
        reps = [r for r in res.reports if r.name == "lemma3_average_local_distance"]
        assert len(reps) == 1 and np.isfinite(reps[0].lhs)
        assert len(reps[0].details["per_cube"]) == res.N
    from thermolattice.scenarios.emit import emit_reports

    emit_reports(rec, tmp_path)
    doc = json.loads((tmp_path / "run.json").read_text())
    names = [[b["name"] for b in r["bound_reports"]] for r in doc["results"]]
    assert all("lemma3_average_local_distance" in ns for ns in names)


# --------------------------------------------------------------------------- 10


@pytest.mark.criterion(10, "golden quench run (N = 8, fixed seed) gives byte-identical run.json")
def test_criterion_10_determinism(tmp_path, capsys):
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code = main(["quench", "--out", str(out), "--sizes", "8", "--seed", "7"])
        assert code in (0, 3)
        runs.append((out / "run.json").read_bytes())
    capsys.readouterr()
    assert runs[0] == runs[1]
