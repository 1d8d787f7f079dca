"""Dense state-vector mechanics for short interacting spin chains.

Conventions used throughout the package:

- Sites are numbered 1..N.  A classical basis state is a bit tuple
  (k_1, ..., k_N) with k_i in {0, 1}; its state-vector index is
  sum_i k_i * 2**(N - i), i.e. site 1 is the most significant bit.
- |0> is the +1 eigenstate of sigma_z.
- Couplings and fields are angular frequencies (rad/s), times are seconds.
- State arrays carry amplitudes along the last axis, so every helper here
  accepts a single state of shape (dim,) or a batch of shape (..., dim).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi

# Dense 2^N x 2^N operator algebra gets prohibitive quickly; 12 spins means
# 4096 x 4096 complex matrices, which is the largest size we support.
MAX_SPINS = 12

PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}
IDENTITY_2 = np.eye(2, dtype=complex)
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)

for _m in (*PAULI.values(), IDENTITY_2, HADAMARD):
    _m.setflags(write=False)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Power-law Ising chain with a transverse field.

    H = sum_{i<j} j0 / |i-j|**alpha sigma^x_i sigma^x_j + b_field sum_i sigma^z_i

    ``j0`` and ``b_field`` are angular frequencies (rad/s).  With
    ``double_count_pairs`` every unordered pair contributes twice, which is
    the literal reading of a sum over ordered pairs i != j.
    """

    n_spins: int
    j0: float
    alpha: float
    b_field: float
    double_count_pairs: bool = False

    def __post_init__(self):
        if self.n_spins < 1:
            raise ValueError("n_spins must be >= 1")
        if self.j0 < 0:
            raise ValueError("j0 must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")

    @classmethod
    def from_hz(cls, n_spins, j0_hz, alpha, b_field_hz, double_count_pairs=False):
        """Build a spec from plain frequencies in Hz (multiplied by 2*pi)."""
        return cls(
            n_spins=n_spins,
            j0=TWO_PI * j0_hz,
            alpha=alpha,
            b_field=TWO_PI * b_field_hz,
            double_count_pairs=double_count_pairs,
        )

    @property
    def dim(self) -> int:
        return 1 << self.n_spins


def n_spins_of(states: np.ndarray) -> int:
    """Number of spins for a state array with amplitudes on the last axis."""
    dim = states.shape[-1]
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise ValueError(f"state dimension {dim} is not a power of two")
    return n


def basis_index(bits) -> int:
    """State-vector index of the basis state with the given bits (site 1 first)."""
    idx = 0
    for b in bits:
        b = int(b)
        if b not in (0, 1):
            raise ValueError("basis-state bits must be 0 or 1")
        idx = (idx << 1) | b
    return idx


def index_bits(index: int, n_spins: int) -> np.ndarray:
    """Bits (k_1, ..., k_N) of a state-vector index."""
    return index_bits_batch(np.asarray([index]), n_spins)[0]


def index_bits_batch(indices, n_spins: int) -> np.ndarray:
    """Bits of many state-vector indices, shape (len(indices), n_spins)."""
    indices = np.asarray(indices, dtype=np.int64)
    shifts = np.arange(n_spins - 1, -1, -1, dtype=np.int64)
    return ((indices[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


@lru_cache(maxsize=None)
def z_sign_table(n_spins: int) -> np.ndarray:
    """(N, 2^N) table of sigma_z eigenvalues per site and basis index."""
    idx = np.arange(1 << n_spins, dtype=np.int64)
    table = 1.0 - 2.0 * index_bits_batch(idx, n_spins).astype(np.float64).T
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def total_magnetization(n_spins: int) -> np.ndarray:
    """(2^N,) eigenvalues of sum_i sigma^z_i per basis index."""
    m = z_sign_table(n_spins).sum(axis=0)
    m.setflags(write=False)
    return m


def basis_state(bits) -> np.ndarray:
    """Product basis state |k_1 ... k_N> as a dense state vector."""
    bits = list(bits)
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[basis_index(bits)] = 1.0
    return psi


def kron_all(mats) -> np.ndarray:
    out = np.asarray(mats[0])
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def product_state(site_vectors) -> np.ndarray:
    """Tensor product of per-site 2-vectors (site 1 leftmost)."""
    psi = np.asarray(site_vectors[0], dtype=complex)
    for v in site_vectors[1:]:
        psi = np.kron(psi, v)
    return psi


def single_site_operator(op2, site: int, n_spins: int) -> np.ndarray:
    """Embed a 2x2 operator on `site` into the full 2^N-dimensional space."""
    if not 1 <= site <= n_spins:
        raise ValueError(f"site {site} outside 1..{n_spins}")
    ops = [IDENTITY_2] * n_spins
    ops[site - 1] = np.asarray(op2, dtype=complex)
    return kron_all(ops)


def apply_single_site(states: np.ndarray, op2, site: int) -> np.ndarray:
    """Apply a 2x2 operator to one site of a state or batch of states."""
    states = np.asarray(states)
    n = n_spins_of(states)
    if not 1 <= site <= n:
        raise ValueError(f"site {site} outside 1..{n}")
    left = 1 << (site - 1)
    right = 1 << (n - site)
    shape = states.shape
    arr = states.reshape(-1, left, 2, right)
    out = np.einsum("ab,slbr->slar", np.asarray(op2), arr)
    return out.reshape(shape)


def rotate_to_x_basis(states: np.ndarray) -> np.ndarray:
    """Rotate every site with a Hadamard so sigma_x becomes diagonal.

    After this rotation a z-basis readout of the returned state samples all
    sigma_x_j simultaneously (outcome bit 0 <-> eigenvalue +1).
    """
    states = np.asarray(states, dtype=complex)
    for site in range(1, n_spins_of(states) + 1):
        states = apply_single_site(states, HADAMARD, site)
    return states


def born_probabilities(states: np.ndarray) -> np.ndarray:
    """|amplitude|^2 along the last axis, clipped and renormalised."""
    p = np.abs(np.asarray(states)) ** 2
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=-1, keepdims=True)


def norm(psi: np.ndarray) -> float:
    return float(np.linalg.norm(psi))


def is_hermitian(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    matrix = np.asarray(matrix)
    return matrix.ndim == 2 and matrix.shape[0] == matrix.shape[1] and bool(
        np.max(np.abs(matrix - matrix.conj().T)) <= tol
    )


def build_hamiltonian(spec: HamiltonianSpec) -> np.ndarray:
    """Dense Hamiltonian matrix of the power-law Ising chain.

    Returned as a real symmetric float64 array (the sigma_x sigma_x and
    sigma_z terms are real in the computational basis).
    """
    n = spec.n_spins
    if n > MAX_SPINS:
        raise ValueError(
            f"n_spins={n} exceeds the dense-backend limit MAX_SPINS={MAX_SPINS}"
        )
    dim = 1 << n
    h = np.zeros((dim, dim))
    idx = np.arange(dim)
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            coupling = spec.j0 / abs(i - j) ** spec.alpha
            if spec.double_count_pairs:
                coupling *= 2.0
            # sigma^x_i sigma^x_j flips bits i and j of the basis index
            mask = (1 << (n - i)) | (1 << (n - j))
            h[idx, idx ^ mask] += coupling
    h[idx, idx] += spec.b_field * total_magnetization(n)
    return h


class Propagator:
    """Spectral decomposition of a hermitian H, reused for every time.

    ``evolve(psi, t)`` returns exp(-i H t) |psi>; the eigendecomposition is
    computed once, so evaluating many times and states is two matrix-vector
    products each.  Instances are immutable and safe to share across workers.
    """

    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues: np.ndarray, eigenvectors: np.ndarray):
        self.eigenvalues = np.array(eigenvalues, dtype=float)
        self.eigenvectors = np.array(eigenvectors, dtype=complex)
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def phases(self, t: float) -> np.ndarray:
        return np.exp(-1j * self.eigenvalues * t)

    def matrix(self, t: float) -> np.ndarray:
        """Dense exp(-i H t)."""
        v = self.eigenvectors
        return (v * self.phases(t)) @ v.conj().T

    def evolve(self, states: np.ndarray, t: float) -> np.ndarray:
        """exp(-i H t) applied to a state or batch (amplitudes on last axis)."""
        states = np.asarray(states, dtype=complex)
        if states.shape[-1] != self.dim:
            raise ValueError(
                f"state dimension {states.shape[-1]} != propagator dimension {self.dim}"
            )
        if t == 0.0:
            return states.copy()
        v = self.eigenvectors
        tilde = states @ v.conj()
        tilde *= self.phases(t)
        return tilde @ v.T

    def evolve_times(self, psi: np.ndarray, times) -> np.ndarray:
        """Evolve one state to several times at once, shape (len(times), dim)."""
        psi = np.asarray(psi, dtype=complex)
        if psi.shape != (self.dim,):
            raise ValueError("evolve_times expects a single state vector")
        v = self.eigenvectors
        tilde = psi @ v.conj()
        phases = np.exp(-1j * np.multiply.outer(np.asarray(times, float), self.eigenvalues))
        return (phases * tilde) @ v.T


def make_propagator(h: np.ndarray) -> Propagator:
    """Eigendecompose a hermitian matrix into a reusable Propagator."""
    h = np.asarray(h)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if not is_hermitian(h, tol=1e-10 * scale):
        raise ValueError("make_propagator requires a hermitian matrix")
    eigenvalues, eigenvectors = np.linalg.eigh(h)
    return Propagator(eigenvalues, eigenvectors)


@lru_cache(maxsize=4)
def propagator_for(spec: HamiltonianSpec) -> Propagator:
    """Cached propagator for a Hamiltonian spec (one eigh per spec)."""
    return make_propagator(build_hamiltonian(spec))


def evolve(psi: np.ndarray, prop: Propagator, t: float) -> np.ndarray:
    """exp(-i H t)|psi> via the precomputed spectral decomposition."""
    return prop.evolve(psi, t)


def expectation(psi: np.ndarray, op: np.ndarray) -> float:
    """<psi|op|psi> for a hermitian operator; the vanishing imaginary part
    (guaranteed below 1e-10 by hermiticity) is discarded."""
    psi = np.asarray(psi, dtype=complex)
    op = np.asarray(op)
    if op.shape != (psi.shape[-1], psi.shape[-1]):
        raise ValueError("operator/state dimension mismatch")
    scale = max(1.0, float(np.max(np.abs(op))))
    if not is_hermitian(op, tol=1e-10 * scale):
        raise ValueError("expectation requires a hermitian operator")
    value = np.vdot(psi, op @ psi)
    return float(value.real)


def z_expectations(states: np.ndarray) -> np.ndarray:
    """Per-site <sigma_z> for a state or batch, shape (..., N)."""
    states = np.asarray(states)
    n = n_spins_of(states)
    return born_probabilities(states) @ z_sign_table(n).T


def x_expectations(states: np.ndarray) -> np.ndarray:
    """Per-site <sigma_x> for a state or batch, shape (..., N)."""
    return z_expectations(rotate_to_x_basis(states))


def sample_indices(probabilities: np.ndarray, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling of basis indices from one probability vector."""
    cum = np.cumsum(probabilities)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(n_shots), side="right")


def sample_indices_rows(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One basis index per row of a (batch, dim) probability array."""
    cum = np.cumsum(probabilities, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(probabilities.shape[0])
    return (cum < u[:, None]).sum(axis=1)


def sample_measurement(psi: np.ndarray, basis: str, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    """Projective readout of all spins at once in the global z or x basis.

    Returns an (n_shots, N) uint8 array of outcome bits drawn from the Born
    distribution; bit 0 corresponds to eigenvalue +1.  Deterministic given
    the generator state.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    psi = np.asarray(psi, dtype=complex)
    n = n_spins_of(psi)
    if basis == "z":
        probs = born_probabilities(psi)
    elif basis == "x":
        probs = born_probabilities(rotate_to_x_basis(psi))
    else:
        raise ValueError(f"unknown measurement basis {basis!r} (use 'z' or 'x')")
    return index_bits_batch(sample_indices(probs, n_shots, rng), n)


def exact_otoc(spec: HamiltonianSpec, w_site: int, v_op: np.ndarray, t: float) -> float:
    """Infinite-temperature OTOC Tr[W(t) V W(t) V] / D with W = sigma^x_{w_site}.

    V is a hermitian unitary on the full space (typically a single-site
    Pauli).  Uses the cached spectral decomposition of H.
    """
    return float(exact_otoc_series(spec, [w_site], v_op, [t])[0, 0])


def exact_otoc_series(spec: HamiltonianSpec, w_sites, v_op: np.ndarray, times) -> np.ndarray:
    """Exact OTOC for several W sites and times, shape (len(w_sites), len(times))."""
    n = spec.n_spins
    dim = spec.dim
    v_op = np.asarray(v_op, dtype=complex)
    if v_op.shape != (dim, dim):
        raise ValueError("v_op dimension mismatch")
    if not is_hermitian(v_op, tol=1e-10):
        raise ValueError("v_op must be hermitian")
    prop = propagator_for(spec)
    vec = prop.eigenvectors
    v_tilde = vec.conj().T @ v_op @ vec
    times = np.asarray(times, dtype=float)
    out = np.empty((len(list(w_sites)), times.size))
    for wi, w_site in enumerate(w_sites):
        w_full = single_site_operator(PAULI["x"], w_site, n)
        w_tilde = vec.conj().T @ w_full @ vec
        for ti, t in enumerate(times):
            p = np.exp(1j * prop.eigenvalues * t)
            w_t = (p[:, None] * w_tilde) * p.conj()[None, :]
            m = w_t @ v_tilde
            out[wi, ti] = float(np.sum(m * m.T).real) / dim
    return out
