"""Measurement-chain behavior: reduced states, emergent statistics, ordering."""

from __future__ import annotations

import numpy as np
import pytest
from _helpers import haar_unitary, permutation_phase_unitary, random_alpha

from covtrace.chain import (
    ChainSpec,
    MeasurementStep,
    analytic_distributions,
    bidirectional_scenario,
    emergent_probabilities,
    measure_step,
    observer_state,
    prepare,
    projective_oracle,
    run_chain,
    total_variation,
)
from covtrace.qlinalg import OverlapMatrix, von_neumann_entropy


def step(label: str, u) -> MeasurementStep:
    if isinstance(u, OverlapMatrix):
        return MeasurementStep(label, u)
    return MeasurementStep(label, OverlapMatrix(np.asarray(u, dtype=complex)))


def two_step_spec(alpha, u2) -> ChainSpec:
    d = len(alpha)
    return ChainSpec(
        np.asarray(alpha, dtype=complex),
        (step("A", OverlapMatrix.identity(d)), step("B", u2)),
    )


# --- prepare --------------------------------------------------------------


def test_prepare_basis_state():
    state = prepare(ChainSpec(np.array([1.0, 0.0]), ()))
    assert state.completed_steps == 0
    np.testing.assert_allclose(state.psi.amps, [1, 0])


def test_prepare_superposition():
    s = 1 / np.sqrt(2)
    state = prepare(ChainSpec(np.array([s, s]), ()))
    assert abs(state.psi.norm - 1.0) < 1e-12


def test_prepare_complex_amplitudes_norm():
    alpha = np.array([np.sqrt(0.3), 1j * np.sqrt(0.7)])
    state = prepare(ChainSpec(alpha, ()))
    assert abs(state.psi.norm - 1.0) < 1e-12


def test_prepare_rejects_unnormalized():
    with pytest.raises(ValueError):
        ChainSpec(np.array([1.0, 1.0]), ())


# --- measure_step ---------------------------------------------------------


def test_first_step_correlates_q_with_register():
    s = 1 / np.sqrt(2)
    spec = ChainSpec(np.array([s, s]), (step("A", OverlapMatrix.identity(2)),))
    state = run_chain(spec)
    t = state.psi.tensor()
    np.testing.assert_allclose(t, np.diag([s, s]), atol=1e-15)


def test_second_step_hadamard_on_basis_state():
    spec = two_step_spec([1.0, 0.0], OverlapMatrix.hadamard())
    t = run_chain(spec).psi.tensor()
    s = 1 / np.sqrt(2)
    expected = np.zeros((2, 2, 2), dtype=complex)
    expected[0, 0, 0] = s
    expected[1, 0, 1] = s
    np.testing.assert_allclose(t, expected, atol=1e-15)


def test_second_step_amplitudes_match_index_loop_oracle():
    alpha = np.array([np.sqrt(0.3), np.sqrt(0.7)], dtype=complex)
    u = OverlapMatrix.rotation(np.pi / 6)
    state = run_chain(two_step_spec(alpha, u))
    expected = np.zeros((2, 2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            expected[j, i, j] = alpha[i] * u.u[i, j]
    assert np.abs(state.psi.tensor() - expected).max() < 1e-12


def test_measure_step_dimension_mismatch():
    state = prepare(ChainSpec(np.array([1.0, 0, 0]) , ()))
    with pytest.raises(ValueError):
        measure_step(state, step("A", OverlapMatrix.identity(2)))


# --- observer_state -------------------------------------------------------


def test_observer_state_maximally_mixed_register():
    s = 1 / np.sqrt(2)
    spec = ChainSpec(np.array([s, s]), (step("A", OverlapMatrix.identity(2)),))
    rho = observer_state(run_chain(spec), "A")
    np.testing.assert_allclose(rho.mat, np.eye(2) / 2, atol=1e-12)


def test_observer_state_hadamard_chain():
    state = run_chain(two_step_spec([1.0, 0.0], OverlapMatrix.hadamard()))
    np.testing.assert_allclose(observer_state(state, "B").mat, np.eye(2) / 2, atol=1e-12)
    np.testing.assert_allclose(
        observer_state(state, "A").mat, np.diag([1.0, 0.0]), atol=1e-12
    )


def test_observer_state_rotation_chain_distribution():
    alpha = [np.sqrt(0.3), np.sqrt(0.7)]
    state = run_chain(two_step_spec(alpha, OverlapMatrix.rotation(np.pi / 6)))
    np.testing.assert_allclose(
        observer_state(state, "B").diagonal(), [0.4, 0.6], atol=1e-12
    )


def test_observer_state_unknown_label():
    state = run_chain(two_step_spec([1.0, 0.0], OverlapMatrix.hadamard()))
    with pytest.raises(ValueError):
        observer_state(state, "C")


# --- emergent_probabilities ----------------------------------------------


def test_single_step_distribution_is_alpha_squared():
    alpha = random_alpha(np.random.default_rng(2), 3)
    spec = ChainSpec(alpha, (step("A", OverlapMatrix.identity(3)),))
    report = emergent_probabilities(run_chain(spec))
    np.testing.assert_allclose(report.distributions["A"], np.abs(alpha) ** 2, atol=1e-12)


def test_entropy_order_basis_state_hadamard():
    report = emergent_probabilities(run_chain(two_step_spec([1.0, 0.0], OverlapMatrix.hadamard())))
    assert report.order == (("A",), ("B",))
    assert report.entropies["A"] < 1e-12
    assert abs(report.entropies["B"] - 1.0) < 1e-12


def test_equal_entropies_reported_incomparable():
    s = 1 / np.sqrt(2)
    report = emergent_probabilities(run_chain(two_step_spec([s, s], OverlapMatrix.hadamard())))
    assert report.order == (("A", "B"),)


def test_emergent_matches_projective_oracle_random():
    rng = np.random.default_rng(41)
    for _ in range(30):
        d = int(rng.integers(2, 6))
        spec = two_step_spec(random_alpha(rng, d), haar_unitary(rng, d))
        report = emergent_probabilities(run_chain(spec))
        oracle = projective_oracle(spec, spec.labels)
        for label in spec.labels:
            assert total_variation(report.distributions[label], oracle[label]) < 1e-9


def test_reduced_diagonals_match_analytic_distributions():
    rng = np.random.default_rng(43)
    for _ in range(15):
        d = int(rng.integers(2, 5))
        steps = tuple(
            step(f"O{k}", haar_unitary(rng, d)) for k in range(int(rng.integers(1, 4)))
        )
        spec = ChainSpec(random_alpha(rng, d), steps)
        state = run_chain(spec)
        analytic = analytic_distributions(state)
        for s in steps:
            diag = observer_state(state, s.label).diagonal()
            assert np.abs(diag - analytic[s.label]).max() < 1e-10


# --- purity and monotonicity ----------------------------------------------


def test_global_state_stays_pure():
    rng = np.random.default_rng(47)
    for _ in range(10):
        d = int(rng.integers(2, 4))
        spec = ChainSpec(
            random_alpha(rng, d),
            tuple(step(f"O{k}", haar_unitary(rng, d)) for k in range(3)),
        )
        state = prepare(spec)
        for s in spec.steps:
            state = measure_step(state, s)
            assert abs(state.psi.norm - 1.0) < 1e-9
            assert von_neumann_entropy(state.psi.density()) < 1e-9


def test_entropy_monotone_along_chain():
    rng = np.random.default_rng(53)
    for _ in range(50):
        d = int(rng.integers(2, 6))
        spec = two_step_spec(random_alpha(rng, d), haar_unitary(rng, d))
        report = emergent_probabilities(run_chain(spec))
        assert report.entropies["B"] - report.entropies["A"] >= -1e-9


# --- projective_oracle ----------------------------------------------------


def test_oracle_identity_ordering_matches_emergent():
    alpha = random_alpha(np.random.default_rng(59), 2)
    spec = two_step_spec(alpha, OverlapMatrix.rotation(0.7))
    report = emergent_probabilities(run_chain(spec))
    oracle = projective_oracle(spec, ("A", "B"))
    for label in ("A", "B"):
        assert total_variation(report.distributions[label], oracle[label]) < 1e-12


def test_oracle_reversed_ordering_differs_for_noncommuting():
    s = 1 / np.sqrt(2)
    spec = two_step_spec([s, s], OverlapMatrix.hadamard())
    emergent = emergent_probabilities(run_chain(spec))
    reversed_out = projective_oracle(spec, ("B", "A"))
    # measuring B first sees the raw superposition, a pure Hadamard eigenstate
    assert total_variation(reversed_out["B"], emergent.distributions["B"]) > 0.05


def test_oracle_order_independent_for_commuting_bases():
    rng = np.random.default_rng(61)
    for _ in range(10):
        d = int(rng.integers(2, 5))
        steps = tuple(
            step(f"O{k}", permutation_phase_unitary(rng, d)) for k in range(3)
        )
        spec = ChainSpec(random_alpha(rng, d), steps)
        base = projective_oracle(spec, spec.labels)
        perm = tuple(np.array(spec.labels)[rng.permutation(3)])
        shuffled = projective_oracle(spec, perm)
        for label in spec.labels:
            assert total_variation(base[label], shuffled[label]) < 1e-12


def test_oracle_rejects_non_permutation():
    spec = two_step_spec([1.0, 0.0], OverlapMatrix.hadamard())
    with pytest.raises(ValueError):
        projective_oracle(spec, ("A", "A"))


# --- bidirectional_scenario ----------------------------------------------


def branch(alpha, labels, second_u) -> ChainSpec:
    return ChainSpec(
        np.asarray(alpha, dtype=complex),
        (step(labels[0], OverlapMatrix.identity(len(alpha))), step(labels[1], second_u)),
    )


def test_bidirectional_commuting_branches_consistent():
    alpha = [np.sqrt(0.3), np.sqrt(0.7)]
    right = branch(alpha, ("A", "B"), OverlapMatrix.identity(2))
    left = branch(alpha, ("Bp", "Ap"), OverlapMatrix.identity(2))
    result = bidirectional_scenario(right, left)
    assert result.consistent
    assert result.witness is not None


def test_bidirectional_basis_state_hadamard_branches():
    # With alpha a basis state the four targets are degenerate enough that a
    # global ordering does exist: both computational measurements first, then
    # the two rotated ones.
    right = branch([1.0, 0.0], ("A", "B"), OverlapMatrix.hadamard())
    left = branch([1.0, 0.0], ("Bp", "Ap"), OverlapMatrix.hadamard())
    result = bidirectional_scenario(right, left)
    assert result.consistent
    per_branch_first = {result.witness.index("A"), result.witness.index("Bp")}
    assert per_branch_first == {0, 1}


def test_bidirectional_generic_scenario_inconsistent():
    alpha = [np.sqrt(0.3), np.sqrt(0.7)]
    right = branch(alpha, ("A", "B"), OverlapMatrix.rotation(np.pi / 6))
    left = branch(alpha, ("Bp", "Ap"), OverlapMatrix.rotation(np.pi / 3))
    result = bidirectional_scenario(right, left)
    assert not result.consistent
    assert result.witness is None
    assert result.best_deviation > 0.05
    # each branch is still internally entropy-ordered
    assert result.right.order == (("A",), ("B",))
    assert result.left.order == (("Bp",), ("Ap",))


def test_bidirectional_empty_left_branch_reduces_to_emergent():
    alpha = [np.sqrt(0.3), np.sqrt(0.7)]
    right = branch(alpha, ("A", "B"), OverlapMatrix.rotation(np.pi / 6))
    left = ChainSpec(np.asarray(alpha, dtype=complex), ())
    result = bidirectional_scenario(right, left)
    assert result.consistent  # the construction ordering always reproduces itself
    emergent = emergent_probabilities(run_chain(right))
    for label in ("A", "B"):
        np.testing.assert_allclose(
            result.right.distributions[label], emergent.distributions[label], atol=1e-12
        )


def test_bidirectional_rejects_mismatched_alpha():
    right = branch([1.0, 0.0], ("A", "B"), OverlapMatrix.hadamard())
    left = branch([0.0, 1.0], ("Bp", "Ap"), OverlapMatrix.hadamard())
    with pytest.raises(ValueError):
        bidirectional_scenario(right, left)
