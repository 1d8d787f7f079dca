import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otoclab.campaign import simulate_campaign, simulate_entropy_campaign
from otoclab.config import CampaignConfig, EntropyCampaignConfig
from otoclab.noise import NoiseSpec
from otoclab.protocol import (
    EstimatorError,
    LocalOperator,
    LocalUnitarySet,
    enumerate_initial_states,
    estimate_otoc,
    estimate_renyi_entropy,
    estimate_second_moment,
    otoc_statistics,
    prepare_rotated_state,
    purity_from_bitstrings,
    purity_from_probabilities,
    run_branch,
    sample_cue_unitary,
    sample_local_unitary_set,
    unbiased_square,
)
from otoclab.spin import (
    PAULI,
    HamiltonianSpec,
    exact_otoc,
    expectation,
    propagator_for,
    single_site_operator,
)
from otoclab.streams import derive_rng


SPEC4 = HamiltonianSpec.from_hz(4, 30.13, 1.21, 1500.0, double_count_pairs=True)


def small_campaign(**kwargs) -> CampaignConfig:
    defaults = dict(
        hamiltonian=SPEC4,
        times=(0.0, 1e-3, 2e-3),
        n_unitaries=40,
        order=2,
        exact_expectations=True,
        n_shots=150,
        seed=17,
    )
    defaults.update(kwargs)
    return CampaignConfig(**defaults)


# --- CUE sampling -----------------------------------------------------------------


def test_cue_unitarity(rng):
    for _ in range(200):
        u = sample_cue_unitary(rng)
        assert np.max(np.abs(u.conj().T @ u - np.eye(2))) < 1e-12


def test_cue_first_and_second_moments(rng):
    # Monte Carlo oracle for the single-qubit Haar moments of <0|u' Z u|0>
    n = 100_000
    vals = np.empty(n)
    for i in range(n):
        u = sample_cue_unitary(rng)
        col = u[:, 0]
        vals[i] = (abs(col[0]) ** 2 - abs(col[1]) ** 2).real
    assert abs(vals.mean()) < 0.01
    assert abs((vals**2).mean() - 1.0 / 3.0) < 0.005


def test_local_unitary_set_shape(rng):
    u_set = sample_local_unitary_set(5, rng, unitary_index=9)
    assert u_set.unitaries.shape == (5, 2, 2)
    assert u_set.unitary_index == 9 and u_set.n_spins == 5


# --- initial-state families ----------------------------------------------------------


def test_initial_states_order_zero():
    fam = enumerate_initial_states(6, 0)
    assert fam.n_states == 1
    assert np.array_equal(fam.states, np.zeros((1, 6), dtype=np.uint8))


def test_initial_states_order_two():
    fam = enumerate_initial_states(10, 2)
    expected = np.zeros((4, 10), dtype=np.uint8)
    expected[1, 0] = 1
    expected[2, 1] = 1
    expected[3, 0] = expected[3, 1] = 1
    assert np.array_equal(fam.states, expected)
    assert np.array_equal(fam.hamming_distances, [0, 1, 1, 2])
    assert np.allclose(fam.weights, [1.0, -0.5, -0.5, 0.25])


def test_initial_states_complete_basis():
    fam = enumerate_initial_states(3, 3)
    assert fam.n_states == 8
    # every 3-bit pattern appears exactly once
    packed = fam.states @ np.array([1, 2, 4])
    assert sorted(packed.tolist()) == list(range(8))


def test_initial_states_rejects_bad_order():
    with pytest.raises(ValueError):
        enumerate_initial_states(3, 4)
    with pytest.raises(ValueError):
        enumerate_initial_states(3, -1)


# --- protocol branches -------------------------------------------------------------------


def test_prepare_rotated_state_is_column_product(rng):
    u_set = sample_local_unitary_set(3, rng)
    bits = np.array([1, 0, 1], dtype=np.uint8)
    psi = prepare_rotated_state(u_set, bits)
    us = u_set.unitaries
    expected = np.kron(np.kron(us[0][:, 1], us[1][:, 0]), us[2][:, 1])
    assert np.allclose(psi, expected, atol=1e-14)


def test_run_branch_identity_unitaries_give_zero_x():
    u_set = LocalUnitarySet(unitaries=np.stack([np.eye(2, dtype=complex)] * 4))
    v = LocalOperator(site=1)
    est = run_branch(SPEC4, u_set, np.zeros(4, dtype=np.uint8), False, v, 0.0)
    assert np.allclose(est, 0.0, atol=1e-12)


def test_run_branch_probe_trivial_before_evolution(rng):
    # at t=0 the probe on site 1 cannot affect measurements on other sites
    u_set = sample_local_unitary_set(4, rng)
    v = LocalOperator(site=1)
    k0 = np.zeros(4, dtype=np.uint8)
    plain = run_branch(SPEC4, u_set, k0, False, v, 0.0)
    probed = run_branch(SPEC4, u_set, k0, True, v, 0.0)
    assert np.allclose(plain[1:], probed[1:], atol=1e-12)
    assert plain[0] == pytest.approx(-probed[0], abs=1e-12)


def test_run_branch_exact_matches_expectation_oracle(rng):
    u_set = sample_local_unitary_set(4, rng)
    v = LocalOperator(site=1)
    bits = np.array([1, 1, 0, 0], dtype=np.uint8)
    t = 1.3e-3
    est = run_branch(SPEC4, u_set, bits, False, v, t)
    prop = propagator_for(SPEC4)
    psi = prop.evolve(prepare_rotated_state(u_set, bits), t)
    for j in range(1, 5):
        oracle = expectation(psi, single_site_operator(PAULI["x"], j, 4))
        assert est[j - 1] == pytest.approx(oracle, abs=1e-10)


def test_run_branch_validation(rng):
    u_set = sample_local_unitary_set(4, rng)
    v = LocalOperator(site=1)
    with pytest.raises(ValueError):
        run_branch(SPEC4, u_set, np.array([1, 0, 0, 0]), True, v, 0.0)
    with pytest.raises(ValueError):
        run_branch(SPEC4, u_set, np.zeros(4, dtype=np.uint8), False, v, 0.0, n_shots=0)
    with pytest.raises(ValueError):
        run_branch(
            SPEC4, u_set, np.zeros(4, dtype=np.uint8), False, v, 0.0,
            n_shots=None, noise=NoiseSpec(),
        )


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from([1, 7, 50]))
def test_run_branch_estimates_on_shot_grid(seed, n_shots):
    rng = np.random.default_rng(seed)
    u_set = sample_local_unitary_set(4, rng)
    est = run_branch(
        SPEC4, u_set, np.zeros(4, dtype=np.uint8), False, LocalOperator(site=1),
        1e-3, n_shots=n_shots, rng=np.random.default_rng(seed + 1),
    )
    assert np.all(np.abs(est) <= 1.0 + 1e-12)
    counts = (est + 1.0) * n_shots / 2.0
    assert np.allclose(counts, np.round(counts), atol=1e-9)


def test_run_branch_deterministic_given_stream():
    u_set = sample_local_unitary_set(4, derive_rng(5, 1, 0), 0)
    args = (SPEC4, u_set, np.zeros(4, dtype=np.uint8), False, LocalOperator(site=1), 1e-3)
    a = run_branch(*args, n_shots=80, noise=NoiseSpec(), rng=derive_rng(5, 2, 0))
    b = run_branch(*args, n_shots=80, noise=NoiseSpec(), rng=derive_rng(5, 2, 0))
    assert np.array_equal(a, b)


# --- OTOC estimators ----------------------------------------------------------------------


def test_otoc_anchor_plus_one_exact_mode():
    data = simulate_campaign(small_campaign())
    point = estimate_otoc(data, 2, w_site=3, t=0.0)
    assert point.value == pytest.approx(1.0, abs=1e-10)
    assert point.reliable


def test_otoc_anchor_minus_one_exact_mode():
    data = simulate_campaign(small_campaign())
    point = estimate_otoc(data, 2, w_site=1, t=0.0)
    assert point.value == pytest.approx(-1.0, abs=1e-10)


def test_otoc_anchors_survive_shot_noise():
    config = small_campaign(exact_expectations=False, n_shots=120, n_unitaries=150)
    data = simulate_campaign(config)
    from otoclab.analysis import ratio_jackknife

    for w_site, target in ((3, 1.0), (1, -1.0)):
        nums, dens = otoc_statistics(data, 2, w_site, 0.0)
        est = ratio_jackknife(nums, dens)
        assert abs(est.value - target) <= 3.0 * est.std_error + 0.01


def test_equal_weights_break_t0_anchor():
    # swapping the signed Hamming weights for flat ones kills the
    # normalization at t=0 whenever the measured site is within the flipped
    # block (the per-unitary sum cancels identically), so the implemented
    # weights are load-bearing for the +-1 anchors
    config = small_campaign(n_unitaries=400)
    data = simulate_campaign(config)
    ti = data.time_index(0.0)
    w = data.plain[:, :, ti, 0]  # site 1 estimates across the 4 initial states
    w0 = data.plain[:, 0, ti, 0]
    v0 = data.v_applied[:, ti, 0]
    signed = enumerate_initial_states(4, 2).weights
    flat = np.ones(4)
    den_signed = (w @ signed * w0).mean()
    den_flat = (w @ flat * w0).mean()
    otoc_signed = (w @ signed * v0).mean() / den_signed
    assert otoc_signed == pytest.approx(-1.0, abs=1e-10)
    assert abs(den_signed) > 0.1
    assert abs(den_flat) < 1e-10  # flat weights: no anchor, 0/0 normalization


def test_order_identity_matches_trace_oracle():
    # O_n at n = N equals the exact OTOC (small-system brute-force identity)
    spec = HamiltonianSpec.from_hz(3, 30.13, 1.21, 1500.0, double_count_pairs=True)
    config = CampaignConfig(
        hamiltonian=spec,
        times=(0.0, 1e-3, 2e-3),
        n_unitaries=3000,
        order=3,
        exact_expectations=True,
        seed=23,
    )
    data = simulate_campaign(config)
    from otoclab.analysis import ratio_jackknife

    v_full = single_site_operator(PAULI["z"], 1, 3)
    for t in config.times:
        nums, dens = otoc_statistics(data, 3, 2, t)
        est = ratio_jackknife(nums, dens)
        exact = exact_otoc(spec, 2, v_full, t)
        assert abs(est.value - exact) <= 3.0 * est.std_error


def test_half_campaign_consistency():
    config = small_campaign(n_unitaries=400, seed=31)
    data = simulate_campaign(config)
    from otoclab.analysis import ratio_jackknife

    nums, dens = otoc_statistics(data, 2, 2, 2e-3)
    first = ratio_jackknife(nums[:200], dens[:200])
    second = ratio_jackknife(nums[200:], dens[200:])
    combined = np.hypot(first.std_error, second.std_error)
    assert abs(first.value - second.value) <= 3.0 * combined


def test_estimator_preconditions():
    data = simulate_campaign(small_campaign())
    with pytest.raises(EstimatorError):
        otoc_statistics(data, 3, 2, 0.0)  # only 2^2 states stored
    with pytest.raises(EstimatorError):
        otoc_statistics(data, 2, 9, 0.0)


def test_denominator_floor_flags_unreliable():
    data = simulate_campaign(small_campaign())
    point = estimate_otoc(data, 2, w_site=3, t=0.0, den_floor=10.0)
    assert not point.reliable
    assert np.isfinite(point.value)


def test_unbiased_square_identity():
    est = np.array([-1.0, 1.0, 0.4])
    assert np.allclose(unbiased_square(est, 0), est**2)
    corrected = unbiased_square(est, 50)
    assert np.allclose(corrected, est**2 - (1 - est**2) / 49)
    assert corrected[0] == pytest.approx(1.0)  # +-1 estimates stay exact


def test_second_moment_haar_value_at_t0():
    config = small_campaign(n_unitaries=1500, seed=41)
    data = simulate_campaign(config)
    value, raw = estimate_second_moment(data, 0.0)
    assert value == pytest.approx(1.0 / 3.0, abs=0.02)
    assert raw == value  # exact mode: no shot-noise correction applied


def test_second_moment_bias_correction_in_shot_mode():
    config = small_campaign(exact_expectations=False, n_shots=60, n_unitaries=600, seed=43)
    data = simulate_campaign(config)
    est = estimate_second_moment(data, 0.0)
    # raw squares of finite-shot means are biased up by (1 - w^2)/N_M
    assert est.raw_value > est.value
    assert est.raw_value - est.value == pytest.approx((1 - 1.0 / 3.0) / 60, rel=0.2)
    assert est.value == pytest.approx(1.0 / 3.0, abs=0.02)


# --- Renyi purity estimators --------------------------------------------------------------


def test_purity_pure_product_state_exact_probabilities():
    spec = HamiltonianSpec.from_hz(3, 30.0, 1.2, 1500.0)
    config = EntropyCampaignConfig(
        hamiltonian=spec,
        times=(0.0,),
        n_unitaries=2000,
        exact_probabilities=True,
        seed=7,
    )
    data = simulate_entropy_campaign(config)
    from otoclab.protocol import renyi_purity_statistics

    stats = renyi_purity_statistics(data, (1, 2, 3), 0.0)
    se = stats.std() / np.sqrt(stats.size)
    assert abs(stats.mean() - 1.0) < 4 * se
    assert estimate_renyi_entropy(data, (1, 2, 3), 0.0) == pytest.approx(0.0, abs=0.1)


def test_purity_maximally_mixed_single_qubit(rng):
    # trajectory construction: each shot reads a random classical bit through
    # its own random unitary, which realizes the maximally mixed state
    n_u, n_m = 400, 60
    purities = np.empty(n_u)
    for u in range(n_u):
        u_set = sample_local_unitary_set(1, np.random.default_rng(1000 + u))
        probs_0 = np.abs(u_set.unitaries[0][:, 0]) ** 2
        probs_1 = np.abs(u_set.unitaries[0][:, 1]) ** 2
        shot_rng = np.random.default_rng(5000 + u)
        which = shot_rng.random(n_m) < 0.5
        p = np.where(which, probs_0[1], probs_1[1])
        bits = (shot_rng.random(n_m) < p).astype(np.uint8)[:, None]
        purities[u] = purity_from_bitstrings(bits, (1,), 1)
    mean = purities.mean()
    se = purities.std() / np.sqrt(n_u)
    assert abs(mean - 0.5) < 4 * se + 0.01
    assert -np.log2(mean) == pytest.approx(1.0, abs=0.15)


def test_purity_bitstring_estimator_unbiased(rng):
    # fixed readout distribution: shot-sampled estimates must average to the
    # infinite-shot value computed from the probabilities
    psi = np.kron(
        sample_cue_unitary(rng)[:, 0],
        np.kron(sample_cue_unitary(rng)[:, 0], sample_cue_unitary(rng)[:, 0]),
    )
    probs = np.abs(psi) ** 2
    exact = purity_from_probabilities(probs, (1, 2), 3)
    n_rep, n_m = 3000, 40
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    vals = np.empty(n_rep)
    for r in range(n_rep):
        idx = np.searchsorted(cum, rng.random(n_m), side="right")
        bits = ((idx[:, None] >> np.array([2, 1, 0])) & 1).astype(np.uint8)
        vals[r] = purity_from_bitstrings(bits, (1, 2), 3)
    se = vals.std() / np.sqrt(n_rep)
    assert abs(vals.mean() - exact) < 4 * se


def test_purity_partition_validation(rng):
    bits = rng.integers(0, 2, size=(30, 4)).astype(np.uint8)
    with pytest.raises(ValueError):
        purity_from_bitstrings(bits, (), 4)
    with pytest.raises(ValueError):
        purity_from_bitstrings(bits, (0, 1), 4)
    with pytest.raises(ValueError):
        purity_from_bitstrings(bits, (1, 1), 4)


def test_entropy_error_flag_on_nonpositive_purity():
    spec = HamiltonianSpec.from_hz(1, 0.0, 1.0, 0.0)
    config = EntropyCampaignConfig(
        hamiltonian=spec, times=(0.0,), n_unitaries=2, n_shots=2, seed=1
    )
    data = simulate_entropy_campaign(config)
    # craft pathological records: the two shots of every unitary disagree
    data.bits[:, :, 0, 0] = 0
    data.bits[:, :, 1, 0] = 1
    with pytest.raises(EstimatorError):
        estimate_renyi_entropy(data, (1,), 0.0)
