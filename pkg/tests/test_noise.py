import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otoclab.noise import (
    TRANSITION_TO_HALF_SPIN,
    TWO_PI,
    NoiseSpec,
    apply_dephasing,
    dephased_density_matrix,
    dephasing_characteristic,
    ramsey_contrast,
    sample_phase,
    sample_phases,
)
from otoclab.spin import basis_state, born_probabilities, x_expectations
from conftest import random_state


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(white_std=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(dt=0.0)
    with pytest.raises(ValueError):
        NoiseSpec(phase_policy="per-century")


def test_zero_noise_gives_zero_phase(rng):
    spec = NoiseSpec(white_std=0.0, periodic_amplitude=0.0)
    assert sample_phase(spec, 3.3e-3, rng) == 0.0
    assert np.all(sample_phases(spec, 0.1, rng, 100) == 0.0)


def test_periodic_full_period_integrates_to_zero(rng):
    spec = NoiseSpec(
        white_std=0.0,
        periodic_amplitude=TWO_PI * 90.0,
        periodic_frequency=204.0,
        phase_policy="fixed",
        fixed_phase=0.0,
    )
    assert sample_phase(spec, 1.0 / 204.0, rng) == pytest.approx(0.0, abs=1e-12)
    # half a period does not cancel
    assert abs(sample_phase(spec, 0.5 / 204.0, rng)) > 0.1


def test_white_phase_variance_matches_random_walk(rng):
    # oracle: independent normal steps of weight dt accumulate variance
    # std^2 * (n_steps * dt^2) = std^2 * dt * t for t on the step grid
    spec = NoiseSpec(white_std=TWO_PI * 120.0, dt=1e-4, periodic_amplitude=0.0)
    t = 30 * spec.dt
    phases = sample_phases(spec, t, rng, 100_000)
    expected = spec.white_std**2 * spec.dt * t
    assert np.var(phases) == pytest.approx(expected, rel=0.05)
    assert np.mean(phases) == pytest.approx(0.0, abs=5 * np.sqrt(expected / 100_000))


def test_partial_step_included(rng):
    spec = NoiseSpec(white_std=TWO_PI * 120.0, dt=1e-4, periodic_amplitude=0.0)
    t = 3.65e-4  # 3 full steps plus a partial step of 0.65 dt
    phases = sample_phases(spec, t, rng, 200_000)
    n_full = 3
    tau = t - n_full * spec.dt
    expected = spec.white_std**2 * (n_full * spec.dt**2 + tau**2)
    assert np.var(phases) == pytest.approx(expected, rel=0.05)


def test_negative_time_rejected(rng):
    with pytest.raises(ValueError):
        sample_phase(NoiseSpec(), -1e-3, rng)


# --- applying the dephasing operator ------------------------------------------------


def test_dephasing_identity_at_zero_phase(rng):
    psi = random_state(3, rng)
    assert np.allclose(apply_dephasing(psi, 0.0), psi)


def test_dephasing_quarter_turn_flips_x():
    # exp(-i (pi/2) sigma_z) maps |+> to |-> up to a global phase
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    out = apply_dephasing(plus, np.pi / 2)
    assert x_expectations(plus)[0] == pytest.approx(1.0, abs=1e-12)
    assert x_expectations(out)[0] == pytest.approx(-1.0, abs=1e-12)
    minus = np.array([1.0, -1.0]) / np.sqrt(2)
    overlap = abs(np.vdot(minus, out))
    assert overlap == pytest.approx(1.0, abs=1e-12)


def test_dephasing_gaussian_ensemble_damps_x(rng):
    # oracle: E[cos 2phi] = exp(-2 v) for phi ~ N(0, v)
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    v = 0.2
    phis = rng.normal(0.0, np.sqrt(v), size=200_000)
    states = apply_dephasing(np.broadcast_to(plus, (phis.size, 2)), phis)
    mean_x = x_expectations(states)[:, 0].mean()
    assert mean_x == pytest.approx(np.exp(-2 * v), abs=0.01)


@given(st.integers(0, 500), st.floats(-10.0, 10.0))
def test_dephasing_preserves_z_probabilities(seed, phi):
    psi = random_state(3, np.random.default_rng(seed))
    out = apply_dephasing(psi, phi)
    assert np.allclose(born_probabilities(out), born_probabilities(psi), atol=1e-12)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-12


def test_dephasing_batch_phases(rng):
    psi = random_state(2, rng)
    phis = np.array([0.0, 0.3, 1.2])
    batch = apply_dephasing(np.broadcast_to(psi, (3, 4)), phis)
    for i, phi in enumerate(phis):
        assert np.allclose(batch[i], apply_dephasing(psi, phi))
    with pytest.raises(ValueError):
        apply_dephasing(psi, phis)


# --- Ramsey contrast ---------------------------------------------------------------------


def test_ramsey_contrast_without_noise(rng):
    spec = NoiseSpec(white_std=0.0, periodic_amplitude=0.0)
    c = ramsey_contrast(spec, [0.0, 1e-3, 0.02], 500, rng)
    assert np.allclose(c, 1.0, atol=1e-12)


def test_ramsey_revival_near_periodic_period(rng):
    # with the default parameters, contrast recovers at the 204 Hz period
    spec = NoiseSpec()
    times = np.array([2.45e-3, 4.9e-3])
    c = ramsey_contrast(spec, times, 3000, rng)
    assert c[1] > c[0] + 0.05


def test_ramsey_requires_samples(rng):
    with pytest.raises(ValueError):
        ramsey_contrast(NoiseSpec(), [1e-3], 50, rng)


def test_ramsey_white_only_decay_rate(rng):
    # contrast tracks exp(-std^2 dt t / 2): the transition phase itself is
    # what a two-level Ramsey sequence accumulates
    spec = NoiseSpec(white_std=TWO_PI * 120.0, periodic_amplitude=0.0)
    t = 0.02
    c = ramsey_contrast(spec, [t], 40_000, rng)[0]
    assert c == pytest.approx(np.exp(-0.5 * spec.white_std**2 * spec.dt * t), abs=0.01)


# --- analytic channel helpers -------------------------------------------------------------


def test_characteristic_function_matches_monte_carlo(rng):
    spec = NoiseSpec()
    t = 2e-3
    phis = TRANSITION_TO_HALF_SPIN * sample_phases(spec, t, rng, 150_000)
    for delta in (1.0, 2.0, 5.0):
        mc = np.mean(np.exp(-1j * phis * delta))
        exact = dephasing_characteristic(spec, t, delta)
        assert abs(mc - exact) < 0.01


def test_dephased_density_matrix_properties(rng):
    psi = random_state(3, rng)
    rho = dephased_density_matrix(psi, NoiseSpec(), 1.5e-3)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-12
    # z-basis populations untouched by a global dephasing channel
    assert np.allclose(np.diag(rho).real, np.abs(psi) ** 2, atol=1e-12)
    # purity strictly reduced for a state spread over magnetization sectors
    assert float(np.sum(np.abs(rho) ** 2)) < 1.0


def test_dephased_density_matrix_trajectory_average(rng):
    # Monte Carlo trajectory average converges to the analytic channel
    spec = NoiseSpec()
    t = 2e-3
    psi = random_state(2, rng)
    n_samples = 40_000
    phis = TRANSITION_TO_HALF_SPIN * sample_phases(spec, t, rng, n_samples)
    states = apply_dephasing(np.broadcast_to(psi, (n_samples, 4)), phis)
    rho_mc = (states[:, :, None] * states[:, None, :].conj()).mean(axis=0)
    rho = dephased_density_matrix(psi, spec, t)
    assert np.max(np.abs(rho_mc - rho)) < 0.01


def test_fixed_phase_policy_is_pure_rotation():
    # with a deterministic periodic phase the channel keeps unit modulus
    spec = NoiseSpec(white_std=0.0, phase_policy="fixed", fixed_phase=0.7)
    values = dephasing_characteristic(spec, 1.3e-3, np.arange(-6, 7))
    assert np.allclose(np.abs(values), 1.0, atol=1e-12)
    psi = basis_state([0, 1])
    rho = dephased_density_matrix(psi, spec, 1.3e-3)
    assert float(np.sum(np.abs(rho) ** 2)) == pytest.approx(1.0, abs=1e-10)
