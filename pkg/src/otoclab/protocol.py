"""Randomized-measurement machinery and its statistical estimators.

The protocol prepares a computational product state, rotates every site with
an independent CUE unitary, optionally applies a local probe operator V,
evolves under the chain Hamiltonian, and reads out all sigma_x_j from the
same shots.  Correlating such measurements across initial states and
unitaries yields OTOCs at truncation order n, operator-spreading second
moments, and second Renyi entropies.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .noise import TRANSITION_TO_HALF_SPIN, NoiseSpec, apply_dephasing, sample_phases
from .spin import (
    PAULI,
    Propagator,
    apply_single_site,
    born_probabilities,
    index_bits_batch,
    product_state,
    propagator_for,
    rotate_to_x_basis,
    sample_indices_rows,
    sample_measurement,
    x_expectations,
)


class EstimatorError(RuntimeError):
    """Raised when an estimator cannot produce a statistically valid result."""


@dataclass(frozen=True)
class LocalOperator:
    """Single-site Pauli operator, used for the probe V."""

    site: int
    pauli: str = "z"

    def __post_init__(self):
        if self.pauli not in PAULI:
            raise ValueError(f"unknown Pauli {self.pauli!r}")
        if self.site < 1:
            raise ValueError("site must be >= 1")

    @property
    def matrix2(self) -> np.ndarray:
        return PAULI[self.pauli]


@dataclass(frozen=True)
class LocalUnitarySet:
    """One independent 2x2 unitary per site, u = u_1 x ... x u_N."""

    unitaries: np.ndarray  # (N, 2, 2) complex
    unitary_index: int = 0

    @property
    def n_spins(self) -> int:
        return self.unitaries.shape[0]


def sample_cue_unitary(rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed 2x2 unitary via QR of a complex Gaussian matrix.

    The R-diagonal phases are absorbed into Q, which corrects the plain QR
    output onto the Haar measure.
    """
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def sample_local_unitary_set(
    n_spins: int, rng: np.random.Generator, unitary_index: int = 0
) -> LocalUnitarySet:
    us = np.stack([sample_cue_unitary(rng) for _ in range(n_spins)])
    us.setflags(write=False)
    return LocalUnitarySet(unitaries=us, unitary_index=unitary_index)


@dataclass(frozen=True)
class InitialStateFamily:
    """The 2^n computational states k_0 ... k_{2^n - 1}.

    Row s is the reverse n-bit binary representation of s padded with zeros:
    k_0 flips nothing, k_1 flips site 1, k_2 flips site 2, k_3 flips sites
    1 and 2, and so on.  The Hamming distance from k_0 is popcount(s).
    """

    order: int
    states: np.ndarray  # (2^order, n_spins) uint8

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def hamming_distances(self) -> np.ndarray:
        return self.states.sum(axis=1).astype(np.int64)

    @property
    def weights(self) -> np.ndarray:
        """(-2)^{-D} with D the Hamming distance from the all-zero state."""
        return (-0.5) ** self.hamming_distances


def enumerate_initial_states(n_spins: int, order: int) -> InitialStateFamily:
    if not 0 <= order <= n_spins:
        raise ValueError(f"order {order} outside 0..{n_spins}")
    s = np.arange(1 << order, dtype=np.int64)
    shifts = np.arange(n_spins, dtype=np.int64)  # site i <-> bit (i-1) of s
    states = ((s[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    states.setflags(write=False)
    return InitialStateFamily(order=order, states=states)


def prepare_rotated_state(u_set: LocalUnitarySet, bits) -> np.ndarray:
    """u |k>: column k_i of each site unitary, tensored site 1 leftmost."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (u_set.n_spins,):
        raise ValueError("bit count does not match the unitary set")
    return product_state([u_set.unitaries[i][:, bits[i]] for i in range(u_set.n_spins)])


def run_branch(
    system,
    u_set: LocalUnitarySet,
    bits,
    apply_v: bool,
    v_op: LocalOperator,
    t: float,
    n_shots: Optional[int] = None,
    noise: Optional[NoiseSpec] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Simulate one protocol branch and return estimated <sigma_x_j> for all j.

    Prepares |k>, applies the local random unitaries, optionally applies V
    (allowed only for the all-zero state k_0), evolves for time ``t`` and
    performs one global x-basis readout of ``n_shots`` bitstrings; every
    site's estimate comes from the same shots.  ``n_shots=None`` returns the
    exact expectation values instead (infinite-shot limit).  With ``noise``
    each shot is dephased by an independently sampled global phase before
    readout.

    ``system`` may be a HamiltonianSpec (propagator cached) or a Propagator.
    """
    prop = system if isinstance(system, Propagator) else propagator_for(system)
    bits = np.asarray(bits, dtype=np.uint8)
    if apply_v and bits.any():
        raise ValueError("the V branch is defined only for the all-zero initial state")
    if n_shots is not None and n_shots < 1:
        raise ValueError("n_shots must be >= 1 (or None for exact expectations)")
    if noise is not None and n_shots is None:
        raise ValueError("per-shot dephasing requires finite n_shots")
    psi = prepare_rotated_state(u_set, bits)
    if apply_v:
        psi = apply_single_site(psi, v_op.matrix2, v_op.site)
    psi_t = prop.evolve(psi, t)
    n = u_set.n_spins
    if n_shots is None:
        return x_expectations(psi_t)
    if noise is None:
        out_bits = sample_measurement(psi_t, "x", n_shots, rng)
    else:
        phis = sample_phases(noise, t, rng, n_shots)
        shot_states = apply_dephasing(
            np.broadcast_to(psi_t, (n_shots, psi_t.shape[0])),
            TRANSITION_TO_HALF_SPIN * phis,
        )
        probs = born_probabilities(rotate_to_x_basis(shot_states))
        out_bits = index_bits_batch(sample_indices_rows(probs, rng), n)
    return 1.0 - 2.0 * out_bits.mean(axis=0)


def unbiased_square(estimates: np.ndarray, n_shots: int) -> np.ndarray:
    """Unbiased estimator of <W>^2 from a finite-shot mean.

    The square of an N_M-shot mean is biased upward by (1 - <W>^2)/N_M;
    subtracting the plug-in variance term removes the bias exactly for
    binomial readout.  Exact-expectation records (n_shots == 0) and single
    shots are returned squared as-is.
    """
    estimates = np.asarray(estimates, dtype=float)
    sq = estimates**2
    if n_shots < 2:
        return sq
    return sq - (1.0 - sq) / (n_shots - 1)


# --- estimators over measurement datasets ---------------------------------


def otoc_statistics(data, order: int, w_site: int, t: float):
    """Per-unitary numerator and denominator samples of the order-n OTOC.

    The estimator pairs <W>_{u,k} across the 2^n initial states (weighted by
    (-2)^{-D}) with the V branch for the numerator and with the plain k_0
    branch for the denominator.  In shot mode the k_0 self-pair of the
    denominator uses the unbiased square so projection noise does not bias
    the normalization.
    """
    if order < 0 or (1 << order) > data.plain.shape[1]:
        raise EstimatorError(
            f"dataset holds {data.plain.shape[1]} initial states; order {order} needs {1 << order}"
        )
    if data.n_unitaries < 2:
        raise EstimatorError("need at least 2 unitaries")
    ti = data.time_index(t)
    j = w_site - 1
    if not 0 <= j < data.n_spins:
        raise EstimatorError(f"w_site {w_site} outside 1..{data.n_spins}")
    n_states = 1 << order
    weights = enumerate_initial_states(data.n_spins, order).weights
    w = data.plain[:, :n_states, ti, j]  # (U, 2^order)
    w0 = data.plain[:, 0, ti, j]
    v0 = data.v_applied[:, ti, j]
    nums = (w @ weights) * v0
    n_shots = int(data.n_shots_per_time[ti])
    dens = (w[:, 1:] @ weights[1:]) * w0 + weights[0] * unbiased_square(w0, n_shots)
    return nums, dens


@dataclass(frozen=True)
class OtocPoint:
    """One order-n OTOC estimate with its ratio diagnostics."""

    value: float
    numerator: float
    denominator: float
    reliable: bool


def estimate_otoc(
    data, order: int, w_site: int, t: float, den_floor: float = 1e-4
) -> OtocPoint:
    """Order-n OTOC estimate at one site and time.

    Returns the ratio together with the ensemble-averaged numerator and
    denominator; when |denominator| falls below ``den_floor`` the point is
    flagged unreliable rather than silently divided.
    """
    nums, dens = otoc_statistics(data, order, w_site, t)
    num = float(nums.mean())
    den = float(dens.mean())
    reliable = abs(den) >= den_floor
    value = num / den if den != 0.0 else np.nan
    return OtocPoint(value=value, numerator=num, denominator=den, reliable=reliable)


def second_moment_statistics(
    data, t: float, w_site: Optional[int] = None, bias_corrected: bool = True
) -> np.ndarray:
    """Per-unitary samples of <W(t)>^2_{u,k_0} (optionally site-averaged)."""
    ti = data.time_index(t)
    w0 = data.plain[:, 0, ti, :]  # (U, N)
    n_shots = int(data.n_shots_per_time[ti])
    sq = unbiased_square(w0, n_shots) if bias_corrected else w0**2
    if w_site is None:
        return sq.mean(axis=1)
    return sq[:, w_site - 1]


@dataclass(frozen=True)
class SecondMomentEstimate:
    """Shot-bias-corrected and raw second moment of <W(t)> over unitaries."""

    value: float  # bias-corrected
    raw_value: float

    def __iter__(self):
        return iter((self.value, self.raw_value))


def estimate_second_moment(data, t: float, w_site: Optional[int] = None) -> SecondMomentEstimate:
    """Average over unitaries of <W(t)>^2_{u,k_0}.

    In shot mode the square of the per-unitary mean is biased upward by
    projection noise; both the corrected and the raw value are reported.
    """
    corrected = float(second_moment_statistics(data, t, w_site, bias_corrected=True).mean())
    raw = float(second_moment_statistics(data, t, w_site, bias_corrected=False).mean())
    return SecondMomentEstimate(value=corrected, raw_value=raw)


# --- Renyi entropy from randomized z-basis readout -------------------------


@lru_cache(maxsize=None)
def _popcount_table(n_bits: int) -> np.ndarray:
    table = index_bits_batch(np.arange(1 << n_bits), n_bits).sum(axis=1).astype(np.int64)
    table.setflags(write=False)
    return table


def _partition_columns(partition, n_spins: int) -> np.ndarray:
    cols = np.asarray(sorted(int(s) for s in partition), dtype=np.int64)
    if cols.size == 0:
        raise ValueError("partition must contain at least one site")
    if cols[0] < 1 or cols[-1] > n_spins or np.unique(cols).size != cols.size:
        raise ValueError(f"partition sites must be unique and within 1..{n_spins}")
    return cols - 1


def purity_from_bitstrings(bits: np.ndarray, partition, n_spins: int) -> float:
    """Hamming-weighted purity estimate from one unitary's bitstrings.

    bits is (N_M, N) uint8 from z-basis readout after local random
    unitaries.  All ordered shot pairs m != m' enter, which realizes the
    unbiased product estimator n_s (n_s - 1) / (N_M (N_M - 1)) for repeated
    strings automatically.
    """
    cols = _partition_columns(partition, n_spins)
    n_a = cols.size
    m_shots = bits.shape[0]
    if m_shots < 2:
        raise EstimatorError("purity estimation needs at least 2 shots per unitary")
    packed = bits[:, cols].astype(np.int64) @ (1 << np.arange(n_a, dtype=np.int64))
    dist = _popcount_table(n_a)[packed[:, None] ^ packed[None, :]]
    weight_sum = float(((-0.5) ** dist).sum()) - m_shots  # drop the m == m' diagonal
    return (2.0**n_a) * weight_sum / (m_shots * (m_shots - 1))


def purity_from_probabilities(probs: np.ndarray, partition, n_spins: int) -> float:
    """Infinite-shot analogue of :func:`purity_from_bitstrings`.

    Contracts the marginal outcome distribution on the partition with the
    product kernel [[1, -1/2], [-1/2, 1]] per site, times 2^{|A|}.
    """
    cols = _partition_columns(partition, n_spins)
    p = np.asarray(probs, dtype=float).reshape((2,) * n_spins)
    keep = set(cols.tolist())
    drop = tuple(ax for ax in range(n_spins) if ax not in keep)
    p_a = p.sum(axis=drop).ravel()
    n_a = cols.size
    kernel = np.array([[1.0, -0.5], [-0.5, 1.0]])
    q = p_a.copy()
    for site in range(1, n_a + 1):
        left = 1 << (site - 1)
        right = 1 << (n_a - site)
        q = np.einsum("ab,lbr->lar", kernel, q.reshape(left, 2, right)).ravel()
    return float((2.0**n_a) * (p_a @ q))


def renyi_purity_statistics(data, partition, t: float) -> np.ndarray:
    """Per-unitary purity samples for one partition and time."""
    ti = data.time_index(t)
    n = data.n_spins
    if data.probabilities is not None:
        return np.array(
            [purity_from_probabilities(data.probabilities[u, ti], partition, n)
             for u in range(data.n_unitaries)]
        )
    return np.array(
        [purity_from_bitstrings(data.bits[u, ti], partition, n)
         for u in range(data.n_unitaries)]
    )


def estimate_renyi_entropy(data, partition, t: float) -> float:
    """Second Renyi entropy -log2 Tr[rho_A^2] of the readout-time state.

    Averages the per-unitary Hamming-weighted purity estimates; a purity
    estimate that is not positive raises :class:`EstimatorError` (the
    statistics are insufficient) instead of returning NaN.
    """
    purity = float(renyi_purity_statistics(data, partition, t).mean())
    if purity <= 0.0:
        raise EstimatorError(
            f"purity estimate {purity:.3g} is not positive; collect more data"
        )
    return float(-np.log2(purity))


# --- OTOC series container --------------------------------------------------


@dataclass
class OtocSeries:
    """Order-n OTOC estimates on a (site, time) grid with jackknife errors."""

    order: int
    sites: np.ndarray  # (S,)
    times: np.ndarray  # (T,) strictly increasing
    values: np.ndarray  # (S, T)
    std_errors: np.ndarray  # (S, T), >= 0
    numerators: np.ndarray  # (S, T)
    denominators: np.ndarray  # (S, T)
    reliable: np.ndarray  # (S, T) bool

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if np.any(np.asarray(self.std_errors) < 0):
            raise ValueError("std_errors must be >= 0")

    def site_row(self, site: int) -> int:
        rows = np.nonzero(self.sites == site)[0]
        if rows.size != 1:
            raise KeyError(f"site {site} not in series")
        return int(rows[0])
