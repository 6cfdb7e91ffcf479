"""Local Hamiltonians, observables and channels as full-space matrices.

All built-in families are spin-1/2 models. A term ``h_i`` is stored with its
support and a small matrix; the full ``D x D`` operator is assembled on demand
via :func:`embed`.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import LatticeSpec, Region, distance
from .states import DensityOperator, trace_norm

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10
COMPLETENESS_TOL = 1e-10

I2 = np.eye(2)
X = np.array([[0.0, 1.0], [1.0, 0.0]])
Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
Z = np.array([[1.0, 0.0], [0.0, -1.0]])
#: occupation of the spin-down level, ``(1 - Z) / 2``
NUMBER = np.array([[0.0, 0.0], [0.0, 1.0]])

PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


class OperatorError(ValueError):
    pass


def _as_compact(m: np.ndarray) -> np.ndarray:
    """Drop an identically-zero imaginary part."""
    m = np.asarray(m)
    if np.iscomplexobj(m) and not np.any(m.imag):
        return np.ascontiguousarray(m.real)
    return m


def operator_norm(m) -> float:
    """Spectral norm of a dense or sparse matrix. Dense eigensolve up to 1024, Lanczos above."""
    if sp.issparse(m):
        if m.shape[0] <= 1024:
            m = m.toarray()
    else:
        m = np.asarray(m)
    dim = m.shape[0]
    if dim <= 1024:
        if np.allclose(m, m.conj().T, atol=1e-12, rtol=0):
            return float(np.max(np.abs(np.linalg.eigvalsh(m)), initial=0.0))
        return float(np.linalg.norm(m, 2))
    from scipy.sparse.linalg import LinearOperator, eigsh

    def max_dev(a):
        d = abs(a) if sp.issparse(a) else np.abs(a)
        return float(d.max()) if d.size else 0.0

    if max_dev(m - m.conj().T) <= 1e-12:
        herm = m
    elif max_dev(m + m.conj().T) <= 1e-12:
        herm = 1j * m
    else:
        herm = None
    if herm is not None:
        val = eigsh(herm, k=1, which="LM", tol=1e-13, return_eigenvectors=False)
        return float(abs(val[0]))
    mh = m.conj().T
    gram = LinearOperator(m.shape, matvec=lambda v: mh @ (m @ v), dtype=m.dtype)
    val = eigsh(gram, k=1, which="LA", tol=1e-13, return_eigenvectors=False)
    return float(np.sqrt(max(val[0], 0.0)))


@functools.lru_cache(maxsize=256)
def _digit_offsets(local_dim: int, num_sites: int, sites: tuple[int, ...]) -> np.ndarray:
    """Basis-index contribution of every local configuration on ``sites``."""
    weights = np.array([local_dim ** (num_sites - 1 - s) for s in sites], dtype=np.int64)
    if not sites:
        return np.zeros(1, dtype=np.int64)
    digits = np.array(list(itertools.product(range(local_dim), repeat=len(sites))), dtype=np.int64)
    return digits @ weights


def embed_sparse(matrix: np.ndarray, support: Sequence[int], spec: LatticeSpec) -> sp.csr_matrix:
    """Sparse full-space embedding of ``matrix`` acting on ``support`` (in that order)."""
    support = tuple(int(s) for s in support)
    d, n_sites = spec.local_dim, spec.num_sites
    rest = tuple(s for s in range(n_sites) if s not in support)
    off_s = _digit_offsets(d, n_sites, support)
    off_b = _digit_offsets(d, n_sites, rest)
    m = _as_compact(matrix)
    if m.shape != (len(off_s), len(off_s)):
        raise OperatorError(f"matrix shape {m.shape} does not match support of size {len(support)}")
    ra, ca = np.nonzero(m)
    vals = m[ra, ca]
    rows = (off_s[ra][:, None] + off_b[None, :]).ravel()
    cols = (off_s[ca][:, None] + off_b[None, :]).ravel()
    data = np.repeat(vals, len(off_b))
    dim = spec.hilbert_dim
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


@dataclass(frozen=True)
class LocalTerm:
    """One bounded term ``h_i`` of a local Hamiltonian."""

    support: Region
    matrix: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        m = _as_compact(self.matrix)
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.support.dim, self.support.dim):
            raise OperatorError(
                f"term {self.label!r}: matrix shape {m.shape} does not match support dimension {self.support.dim}"
            )
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise OperatorError(f"term {self.label!r} is not Hermitian")
        if self.norm > 1.0 + NORM_TOL:
            raise OperatorError(f"term {self.label!r} has operator norm {self.norm:.6g} > 1")

    @functools.cached_property
    def norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix)), initial=0.0))


def embed(term: LocalTerm, spec: LatticeSpec | None = None) -> np.ndarray:
    """Dense full-space matrix of ``term`` (identity outside its support)."""
    spec = spec or term.support.spec
    return embed_sparse(term.matrix, term.support.sites, spec).toarray()


class LocalHamiltonian:
    """``H = sum_i h_i`` with every ``h_i`` supported within radius ``k``."""

    def __init__(
        self,
        terms: Sequence[LocalTerm],
        spec: LatticeSpec,
        k: int = 1,
        *,
        translation_invariant: bool = False,
        scale: float = 1.0,
        meta: Mapping | None = None,
    ):
        self.terms = list(terms)
        self.spec = spec
        self.k = int(k)
        self.translation_invariant = bool(translation_invariant)
        self.scale = float(scale)
        self.meta = dict(meta or {})
        for t in self.terms:
            if t.support.spec != spec:
                raise OperatorError(f"term {t.label!r} lives on a different lattice")
            if len(t.support) and not _is_k_local(t.support, self.k):
                raise OperatorError(f"term {t.label!r} is not {self.k}-local")

    @functools.cached_property
    def sparse(self) -> sp.csr_matrix:
        dim = self.spec.hilbert_dim
        total = sp.csr_matrix((dim, dim))
        for t in self.terms:
            total = total + embed_sparse(t.matrix, t.support.sites, self.spec)
        return total.tocsr()

    @functools.cached_property
    def dense(self) -> np.ndarray:
        m = _as_compact(self.sparse.toarray())
        return (m + m.conj().T) / 2

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.dense)

    def __add__(self, other: "LocalHamiltonian") -> "LocalHamiltonian":
        if other.spec != self.spec:
            raise OperatorError("cannot add Hamiltonians on different lattices")
        return LocalHamiltonian(
            self.terms + other.terms,
            self.spec,
            max(self.k, other.k),
            translation_invariant=self.translation_invariant and other.translation_invariant,
            scale=self.scale,
            meta={**self.meta, "perturbed": True},
        )

    def restricted(self, predicate) -> "LocalHamiltonian":
        return LocalHamiltonian(
            [t for t in self.terms if predicate(t)], self.spec, self.k, scale=self.scale, meta=self.meta
        )


def _is_k_local(support: Region, k: int) -> bool:
    spec = support.spec
    return any(all(spec.site_distance(a, s) <= k for s in support) for a in support)


FAMILIES = ("transverse_field", "classical_ising_field", "tfim", "xx_chain", "heisenberg")


def _raw_family_terms(name: str, params: Mapping[str, float], spec: LatticeSpec):
    p = dict(params)
    bonds = spec.bonds()
    sites = range(spec.num_sites)
    out: list[tuple[tuple[int, ...], np.ndarray, str]] = []
    if name == "transverse_field":
        b = p.get("b", 1.0)
        out += [((i,), -b * X, f"x{i}") for i in sites]
    elif name == "classical_ising_field":
        J, h = p.get("J", 1.0), p.get("h", 0.0)
        out += [((i, j), -J * np.kron(Z, Z), f"zz{i},{j}") for i, j in bonds]
        out += [((i,), -h * Z, f"z{i}") for i in sites if h != 0]
    elif name == "tfim":
        J = p.get("J", 1.0)
        h = p.get("h", p.get("g", 1.0) * J)
        hz = p.get("hz", 0.0)
        out += [((i, j), -J * np.kron(Z, Z), f"zz{i},{j}") for i, j in bonds]
        out += [((i,), -h * X - hz * Z, f"x{i}") for i in sites]
    elif name == "xx_chain":
        J, mu = p.get("J", 1.0), p.get("mu", 0.0)
        hop = 0.5 * (np.kron(X, X) + np.kron(Y, Y)).real
        out += [((i, j), J * hop, f"hop{i},{j}") for i, j in bonds]
        out += [((i,), mu * NUMBER, f"n{i}") for i in sites if mu != 0]
    elif name == "heisenberg":
        J, h = p.get("J", 1.0), p.get("h", 0.0)
        ss = 0.25 * (np.kron(X, X) + np.kron(Y, Y) + np.kron(Z, Z)).real
        out += [((i, j), J * ss, f"ss{i},{j}") for i, j in bonds]
        out += [((i,), 0.5 * h * Z, f"sz{i}") for i in sites if h != 0]
    else:
        raise OperatorError(f"unknown Hamiltonian family {name!r}; expected one of {FAMILIES}")
    return out


def family_scale(name: str, params: Mapping[str, float], spec: LatticeSpec) -> float:
    """Rescale factor that brings every raw term of a family to norm <= 1."""
    norms = [float(np.max(np.abs(np.linalg.eigvalsh(m)), initial=0.0)) for _, m, _ in _raw_family_terms(name, params, spec)]
    return max([1.0] + norms)


def build_family(
    name: str,
    params: Mapping[str, float],
    spec: LatticeSpec,
    *,
    scale: float | None = None,
) -> LocalHamiltonian:
    """Assemble a named spin-1/2 model.

    Conventions (``bonds`` are nearest neighbours of the lattice):

    - ``transverse_field``: ``-b sum X_i``
    - ``classical_ising_field``: ``-J sum Z_i Z_j - h sum Z_i``
    - ``tfim``: ``-J sum Z_i Z_j - sum (h X_i + hz Z_i)``; ``g`` may replace ``h`` as ``h = g J``
    - ``xx_chain``: ``J sum (X_i X_j + Y_i Y_j) / 2 + mu sum n_i``
    - ``heisenberg``: ``J sum S_i . S_j + h sum S^z_i`` with spin-1/2 operators

    All terms are divided by one global factor ``max(1, max_i ||h_i||)`` (or
    by ``scale`` if given) so the model satisfies ``||h_i|| <= 1``; the factor
    is kept in ``H.scale`` to convert times and temperatures back.
    """
    if spec.local_dim != 2:
        raise OperatorError("built-in families are defined for qubits only")
    raw = _raw_family_terms(name, params, spec)
    natural = family_scale(name, params, spec)
    if scale is None:
        scale = natural
    elif scale < natural - NORM_TOL:
        raise OperatorError(f"scale {scale} is below the largest term norm {natural}")
    terms = []
    for support, m, label in raw:
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise OperatorError(f"coefficients make term {label!r} non-Hermitian")
        terms.append(LocalTerm(Region(spec, support), m / scale, label))
    return LocalHamiltonian(
        terms,
        spec,
        k=1,
        translation_invariant=spec.periodic,
        scale=scale,
        meta={"family": name, "params": dict(params), "scale": scale},
    )


def local_field_terms(
    spec: LatticeSpec, coefficients: Sequence[float], pauli: str = "Z", *, scale: float = 1.0
) -> list[LocalTerm]:
    """Single-site terms ``c_i P_i / scale``; used to perturb a model."""
    p = PAULIS[pauli]
    return [
        LocalTerm(Region(spec, [i]), c * p / scale, f"{pauli.lower()}{i}")
        for i, c in enumerate(coefficients)
        if c != 0
    ]


def site_operator(spec: LatticeSpec, matrix: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    """Dense full-space version of a matrix acting on ``sites``."""
    return _as_compact(embed_sparse(matrix, sites, spec).toarray())


# --------------------------------------------------------------------------- channels


@dataclass(frozen=True)
class QuantumChannel:
    """A channel ``rho -> sum_i K_i rho K_i^dagger`` acting on ``support``.

    ``kraus_ops`` are the factors that multiply the state from the left, and
    they must satisfy ``sum_i K_i^dagger K_i = 1``.
    """

    kraus_ops: tuple[np.ndarray, ...] = field(repr=False)
    support: Region
    label: str = ""

    def __post_init__(self):
        ops = tuple(np.asarray(k) for k in self.kraus_ops)
        object.__setattr__(self, "kraus_ops", ops)
        dim = self.support.dim
        for k in ops:
            if k.shape != (dim, dim):
                raise OperatorError(f"Kraus operator shape {k.shape} does not match support dimension {dim}")
        if self.completeness_error() > COMPLETENESS_TOL:
            raise OperatorError(f"channel {self.label!r} violates completeness")

    def completeness_error(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus_ops)
        return float(np.max(np.abs(s - np.eye(self.support.dim))))

    def adjoint(self, op: np.ndarray) -> np.ndarray:
        """Heisenberg-picture action on an operator supported on ``support``."""
        return sum(k.conj().T @ op @ k for k in self.kraus_ops)

    def to_dict(self) -> dict:
        return {"label": self.label, "support": list(self.support.sites), "num_kraus": len(self.kraus_ops)}


def _pauli_strings(n: int):
    for labels in itertools.product("IXYZ", repeat=n):
        yield functools.reduce(np.kron, [PAULIS[c] for c in labels], np.eye(1))


def identity_channel(region: Region) -> QuantumChannel:
    return QuantumChannel((np.eye(region.dim),), region, "identity")


def depolarizing_channel(region: Region, p: float = 1.0) -> QuantumChannel:
    """``rho -> (1-p) rho + p tr_A[rho] (x) 1/d_A``; ``p = 1`` fully depolarizes."""
    if not 0 <= p <= 1:
        raise OperatorError(f"depolarizing strength p={p} outside [0, 1]")
    n, d2 = len(region), region.dim**2
    ops = []
    for i, P in enumerate(_pauli_strings(n)):
        w = 1 - p + p / d2 if i == 0 else p / d2
        if w > 0:
            ops.append(np.sqrt(w) * P)
    return QuantumChannel(tuple(ops), region, f"depolarizing(p={p})")


def amplitude_damping_channel(region: Region, gamma: float) -> QuantumChannel:
    if len(region) != 1:
        raise OperatorError("amplitude damping is a single-site channel")
    k0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1 - gamma)]])
    k1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]])
    return QuantumChannel((k0, k1), region, f"amplitude_damping(gamma={gamma})")


def unitary_kick_channel(region: Region, unitary: np.ndarray | str) -> QuantumChannel:
    """Conjugation by a local unitary; a string names a Pauli product, e.g. ``"X"`` or ``"XZ"``."""
    if isinstance(unitary, str):
        label = unitary
        unitary = functools.reduce(np.kron, [PAULIS[c] for c in unitary.upper()], np.eye(1))
    else:
        label = "U"
    u = np.asarray(unitary)
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > COMPLETENESS_TOL:
        raise OperatorError("unitary kick operator is not unitary")
    return QuantumChannel((u,), region, f"unitary_kick({label})")


def measure_forget_channel(region: Region) -> QuantumChannel:
    """Projective measurement in the computational basis with the outcome discarded."""
    dim = region.dim
    ops = []
    for k in range(dim):
        proj = np.zeros((dim, dim))
        proj[k, k] = 1.0
        ops.append(proj)
    return QuantumChannel(tuple(ops), region, "measure_forget")


CHANNELS = ("identity", "depolarizing", "amplitude_damping", "unitary_kick", "measure_forget")


def make_channel(name: str, region: Region, params: Mapping | None = None) -> QuantumChannel:
    params = dict(params or {})
    if name == "identity":
        return identity_channel(region)
    if name == "depolarizing":
        return depolarizing_channel(region, params.get("p", 1.0))
    if name == "amplitude_damping":
        return amplitude_damping_channel(region, params.get("gamma", 0.3))
    if name == "unitary_kick":
        return unitary_kick_channel(region, params.get("unitary", "X"))
    if name == "measure_forget":
        return measure_forget_channel(region)
    raise OperatorError(f"unknown channel {name!r}; expected one of {CHANNELS}")


def apply_channel(ch: QuantumChannel, rho: DensityOperator) -> DensityOperator:
    err = ch.completeness_error()
    if err > COMPLETENESS_TOL:
        raise OperatorError(f"channel {ch.label!r} violates completeness by {err:.3g}")
    spec = rho.spec
    if rho.is_pure and len(ch.kraus_ops) == 1:
        k = embed_sparse(ch.kraus_ops[0], ch.support.sites, spec)
        return DensityOperator.from_vector(k @ rho.vector, spec)
    m = rho.matrix
    out = np.zeros(m.shape, dtype=np.result_type(m, *ch.kraus_ops))
    for kraus in ch.kraus_ops:
        k = embed_sparse(kraus, ch.support.sites, spec)
        km = k @ m
        out += (k @ km.conj().T).conj().T
    return DensityOperator(_as_compact((out + out.conj().T) / 2), spec)


# --------------------------------------------------------------------------- coarse observables


@dataclass(frozen=True)
class CoarseObservable:
    """``M = (1/m) sum_i M_{S_i}`` over pairwise-disjoint regions ``S_i``."""

    blocks: tuple[tuple[Region, np.ndarray], ...]
    norm_cap: float = 1.0

    def __post_init__(self):
        blocks = tuple((r, np.asarray(m)) for r, m in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        seen: set[int] = set()
        for region, m in blocks:
            if seen & set(region.sites):
                raise OperatorError("coarse observable blocks overlap")
            seen |= set(region.sites)
            if np.max(np.abs(np.linalg.eigvalsh(m)), initial=0.0) > self.norm_cap + NORM_TOL:
                raise OperatorError(f"block on {region.sites} exceeds the norm cap {self.norm_cap}")

    def full(self, spec: LatticeSpec) -> np.ndarray:
        total = sum(embed_sparse(m, r.sites, spec) for r, m in self.blocks)
        return total.toarray() / len(self.blocks)


def magnetization(spec: LatticeSpec) -> CoarseObservable:
    """Magnetization per spin, ``(1/N) sum_i Z_i``."""
    return CoarseObservable(tuple((Region(spec, [i]), Z) for i in range(spec.num_sites)), 1.0)


def coarse_expectation_gap(
    obs: CoarseObservable, rho: DensityOperator, tau: DensityOperator
) -> tuple[float, float]:
    """Return ``(|tr[rho M] - tr[tau M]|, C * mean_i ||rho - tau||_{S_i,1})``.

    The bound uses the raw trace norm of the reduced difference (twice the
    trace distance); with that normalization the inequality is sharp.
    """
    from .states import partial_trace

    spec = rho.spec
    diff = rho.matrix - tau.matrix
    gap = abs(np.real(np.sum(diff * obs.full(spec).T)))
    norms = [trace_norm(partial_trace(rho, r) - partial_trace(tau, r)) for r, _ in obs.blocks]
    return float(gap), float(obs.norm_cap * np.mean(norms))
