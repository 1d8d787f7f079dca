"""Shot-to-shot global dephasing: white plus periodic field fluctuations.

The model is a spatially uniform random field that shifts every qubit's
transition frequency.  ``sample_phase`` integrates the field over the wait
time and returns the *transition* phase, i.e. the relative phase accumulated
between the two levels of one qubit.  Because a transition-frequency shift
``delta`` enters the Hamiltonian as ``(delta/2) sum_i sigma_z_i``, the phase
handed to :func:`apply_dephasing` (which applies ``exp(-i phi sum_i
sigma_z_i)``) is *half* the sampled transition phase.  The factor of two is
pinned by Ramsey spectroscopy: with the default parameters the single-qubit
contrast ``|<exp(2i * phi_z)>| = |<exp(i * phi_transition)>|`` falls to 1/e
near 0.033 s, and shows revivals at multiples of the periodic component's
period (about 4.9 ms).

Noise is applied once, after unitary evolution to the readout time, which is
the sequential approximation valid for a transverse field much stronger than
the couplings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0 as bessel_j0

from .spin import TWO_PI, n_spins_of, total_magnetization

# transition phase -> coefficient of sum_i sigma_z_i in the applied phase
TRANSITION_TO_HALF_SPIN = 0.5

PHASE_POLICIES = ("random-per-shot", "fixed")


@dataclass(frozen=True)
class NoiseSpec:
    """Global dephasing parameters (angular frequencies in rad/s).

    ``white_std`` is the standard deviation of the white component, modelled
    as a fresh normal field value per time step ``dt``; the periodic
    component has amplitude ``periodic_amplitude`` and (plain) frequency
    ``periodic_frequency`` in Hz.  ``phase_policy`` selects whether the
    periodic phase offset is drawn uniformly per shot or held at
    ``fixed_phase``.
    """

    white_std: float = TWO_PI * 120.0
    dt: float = 1e-4
    periodic_amplitude: float = TWO_PI * 90.0
    periodic_frequency: float = 204.0
    phase_policy: str = "random-per-shot"
    fixed_phase: float = 0.0

    def __post_init__(self):
        if self.white_std < 0:
            raise ValueError("white_std must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.periodic_amplitude < 0:
            raise ValueError("periodic_amplitude must be >= 0")
        if self.periodic_frequency < 0:
            raise ValueError("periodic_frequency must be >= 0")
        if self.phase_policy not in PHASE_POLICIES:
            raise ValueError(f"phase_policy must be one of {PHASE_POLICIES}")

    @classmethod
    def from_hz(
        cls,
        white_std_hz=120.0,
        dt_s=1e-4,
        periodic_amplitude_hz=90.0,
        periodic_frequency_hz=204.0,
        phase_policy="random-per-shot",
        fixed_phase_rad=0.0,
    ):
        return cls(
            white_std=TWO_PI * white_std_hz,
            dt=dt_s,
            periodic_amplitude=TWO_PI * periodic_amplitude_hz,
            periodic_frequency=periodic_frequency_hz,
            phase_policy=phase_policy,
            fixed_phase=fixed_phase_rad,
        )


def _white_step_counts(spec: NoiseSpec, t: float) -> tuple[int, float]:
    # a final partial step of length t mod dt is always drawn (weight may be 0)
    n_full = int(np.floor(t / spec.dt + 1e-9))
    tau = max(t - n_full * spec.dt, 0.0)
    return n_full, tau


def sample_phases(spec: NoiseSpec, t: float, rng: np.random.Generator, n_samples: int) -> np.ndarray:
    """Accumulated transition phases for ``n_samples`` independent shots.

    phi = sum_m B_m * dt + integral_0^t A sin(2 pi f t' + theta) dt'
    with B_m iid normal(0, white_std) per step dt (plus the final partial
    step) and theta per the phase policy.  Draw order per call: thetas,
    full-step fields, partial-step fields.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if spec.phase_policy == "random-per-shot":
        thetas = rng.uniform(0.0, TWO_PI, size=n_samples)
    else:
        thetas = np.full(n_samples, spec.fixed_phase)
    n_full, tau = _white_step_counts(spec, t)
    phi = np.zeros(n_samples)
    if spec.white_std > 0:
        if n_full > 0:
            phi += rng.normal(0.0, spec.white_std, size=(n_samples, n_full)).sum(axis=1) * spec.dt
        phi += rng.normal(0.0, spec.white_std, size=n_samples) * tau
    if spec.periodic_amplitude > 0:
        omega = TWO_PI * spec.periodic_frequency
        if omega == 0.0:
            phi += spec.periodic_amplitude * np.sin(thetas) * t
        else:
            phi += (spec.periodic_amplitude / omega) * (
                np.cos(thetas) - np.cos(omega * t + thetas)
            )
    return phi


def sample_phase(spec: NoiseSpec, t: float, rng: np.random.Generator) -> float:
    """One accumulated transition phase (see :func:`sample_phases`)."""
    return float(sample_phases(spec, t, rng, 1)[0])


def apply_dephasing(states: np.ndarray, phi) -> np.ndarray:
    """Apply exp(-i phi sum_i sigma_z_i) to a state or batch.

    ``phi`` may be a scalar, or a 1-D array pairing one phase with each row
    of a (batch, dim) state array.  Norms are preserved; z-basis outcome
    probabilities are unchanged for any phi.
    """
    states = np.asarray(states, dtype=complex)
    m = total_magnetization(n_spins_of(states))
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0:
        return states * np.exp(-1j * float(phi) * m)
    if states.ndim != 2 or phi.shape != (states.shape[0],):
        raise ValueError("per-row phases require states of shape (len(phi), dim)")
    return states * np.exp(-1j * np.multiply.outer(phi, m))


def ramsey_contrast(
    spec: NoiseSpec, wait_times, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Single-qubit Ramsey contrast per wait time.

    The two-level Ramsey phase is twice the half-spin phase handed to
    :func:`apply_dephasing`, i.e. exactly the sampled transition phase:
    contrast(t) = |< exp(2i * phi_z) >| = |< exp(i * phi) >|.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    contrasts = np.empty(len(list(wait_times)))
    for i, t in enumerate(wait_times):
        phi_z = TRANSITION_TO_HALF_SPIN * sample_phases(spec, float(t), rng, n_samples)
        contrasts[i] = np.abs(np.mean(np.exp(2j * phi_z)))
    return contrasts


def dephasing_characteristic(spec: NoiseSpec, t: float, delta_m) -> np.ndarray:
    """E[exp(-i phi_z * delta_m)] over the noise ensemble, per delta_m.

    ``delta_m`` is a difference of total-magnetization eigenvalues.  This is
    the exact attenuation factor of the density-matrix element connecting two
    magnetization sectors after one application of the dephasing channel;
    with the random-per-shot policy the periodic part averages to a Bessel
    function, with the fixed policy it stays a pure phase.
    """
    delta_m = np.asarray(delta_m, dtype=float)
    n_full, tau = _white_step_counts(spec, t)
    var_transition = spec.white_std**2 * (n_full * spec.dt**2 + tau**2)
    var_z = TRANSITION_TO_HALF_SPIN**2 * var_transition
    out = np.exp(-0.5 * var_z * delta_m**2).astype(complex)
    if spec.periodic_amplitude > 0:
        omega = TWO_PI * spec.periodic_frequency
        if omega == 0.0:
            amp_z = TRANSITION_TO_HALF_SPIN * spec.periodic_amplitude * t
            if spec.phase_policy == "random-per-shot":
                out *= bessel_j0(np.abs(delta_m) * amp_z)
            else:
                out *= np.exp(-1j * delta_m * amp_z * np.sin(spec.fixed_phase))
        else:
            amp_z = (
                2.0
                * TRANSITION_TO_HALF_SPIN
                * (spec.periodic_amplitude / omega)
                * np.sin(0.5 * omega * t)
            )
            if spec.phase_policy == "random-per-shot":
                out *= bessel_j0(np.abs(delta_m * amp_z))
            else:
                theta = spec.fixed_phase
                phase = amp_z * np.sin(theta + 0.5 * omega * t)
                out *= np.exp(-1j * delta_m * phase)
    return out


def dephased_density_matrix(psi: np.ndarray, spec: NoiseSpec, t: float) -> np.ndarray:
    """Exact noise-averaged density matrix of a pure state after dephasing."""
    psi = np.asarray(psi, dtype=complex)
    m = total_magnetization(n_spins_of(psi))
    kernel = dephasing_characteristic(spec, t, m[:, None] - m[None, :])
    return np.outer(psi, psi.conj()) * kernel
