"""Sequential ideal measurements as unitary observer couplings, no collapse.

A chain starts from amplitudes alpha over a d-dimensional system Q. Each step
carries an overlap matrix relating the previously measured basis to its own
(identity for the first step), rotates the Q bookkeeping into the new basis,
and entangles a fresh d-dimensional pointer register initialized to |0> via a
perfectly correlating interaction. Classical statistics and their time order
emerge from the reduced pointer states alone; nothing is ever projected.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .qlinalg import (
    DensityOperator,
    OverlapMatrix,
    StateVector,
    partial_trace,
    von_neumann_entropy,
)

# Observers whose entropies differ by less than this are not ordered.
ORDER_TOL = 1e-9

__all__ = [
    "ORDER_TOL",
    "MeasurementStep",
    "ChainSpec",
    "ChainState",
    "EntropyReport",
    "BidirectionalResult",
    "prepare",
    "measure_step",
    "run_chain",
    "observer_state",
    "emergent_probabilities",
    "build_entropy_report",
    "projective_oracle",
    "bidirectional_scenario",
]


@dataclass(frozen=True)
class MeasurementStep:
    label: str
    overlap: OverlapMatrix


@dataclass(frozen=True)
class ChainSpec:
    """Initial amplitudes of Q plus the ordered measurement steps."""

    alpha: np.ndarray
    steps: tuple[MeasurementStep, ...]

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=complex).ravel()
        if alpha.size < 2:
            raise ValueError("alpha must have dimension >= 2")
        if abs(np.linalg.norm(alpha) - 1.0) >= 1e-9:
            raise ValueError(f"alpha norm {np.linalg.norm(alpha)} is not 1 within 1e-9")
        steps = tuple(self.steps)
        labels = [s.label for s in steps]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate step labels in {labels}")
        for s in steps:
            if s.overlap.dim != alpha.size:
                raise ValueError(
                    f"step {s.label!r} has dimension {s.overlap.dim}, alpha has {alpha.size}"
                )
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "steps", steps)

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.steps)


@dataclass(frozen=True)
class ChainState:
    """Pure global state over Q and one pointer register per completed step.

    Q is factor 0 and its amplitudes are stored in the most recently measured
    basis; registers follow in step order.
    """

    psi: StateVector
    alpha: np.ndarray
    steps: tuple[MeasurementStep, ...]

    @property
    def completed_steps(self) -> int:
        return len(self.steps)

    @property
    def dim(self) -> int:
        return self.psi.dims[0]

    def register_index(self, label: str) -> int:
        for k, s in enumerate(self.steps):
            if s.label == label:
                return k + 1  # factor 0 is Q
        raise ValueError(f"no completed step labeled {label!r}")


@dataclass(frozen=True)
class EntropyReport:
    """Observer entropies, outcome distributions, and the entropic order.

    `order` groups labels by ascending entropy; labels in the same group
    differ by less than `order_tol` and are mutually incomparable.
    """

    entropies: dict[str, float]
    distributions: dict[str, np.ndarray]
    order: tuple[tuple[str, ...], ...]
    order_tol: float

    def order_text(self) -> str:
        return " < ".join(" ~ ".join(group) for group in self.order)


def prepare(spec: ChainSpec) -> ChainState:
    """Chain state before any measurement: Q alone in state alpha."""
    return ChainState(StateVector(spec.alpha, (spec.dim,)), spec.alpha, ())


def measure_step(state: ChainState, step: MeasurementStep) -> ChainState:
    """Rotate Q into the step's basis and adjoin a perfectly correlated register."""
    d = state.dim
    if step.overlap.dim != d:
        raise ValueError(f"step dimension {step.overlap.dim} does not match chain dimension {d}")
    t = state.psi.tensor()
    # amplitudes in the new basis: c'_j = sum_i U_ij c_i
    t = np.tensordot(step.overlap.u.T, t, axes=(1, 0))
    correlated = np.zeros(t.shape + (d,), dtype=complex)
    idx = np.arange(d)
    correlated[idx, ..., idx] = t[idx]
    psi = StateVector(correlated.ravel(), state.psi.dims + (d,))
    return ChainState(psi, state.alpha, state.steps + (step,))


def run_chain(spec: ChainSpec) -> ChainState:
    """Prepare and apply every step of the spec."""
    state = prepare(spec)
    for step in spec.steps:
        state = measure_step(state, step)
    return state


def observer_state(state: ChainState, label: str) -> DensityOperator:
    """Reduced density operator of one pointer register."""
    return partial_trace(state.psi.density(), keep={state.register_index(label)})


def analytic_distributions(state: ChainState) -> dict[str, np.ndarray]:
    """Per-observer outcome distributions from the overlap matrices alone.

    The register adjoined at step k sees p_k = T_k^T p_{k-1} with
    T_k = |U_k|^2 and p_0 the squared amplitudes of alpha in the first
    measured basis. Used as the closed-form cross-check on the reduced
    states.
    """
    out: dict[str, np.ndarray] = {}
    p: np.ndarray | None = None
    c = state.alpha
    for k, step in enumerate(state.steps):
        if k == 0:
            p = np.abs(step.overlap.u.T @ c) ** 2
        else:
            p = step.overlap.stochastic().T @ p
        out[step.label] = p
    return out


def build_entropy_report(
    observer_states: dict[str, DensityOperator], order_tol: float = ORDER_TOL
) -> EntropyReport:
    """Entropy report from reduced density operators and nothing else."""
    entropies = {label: von_neumann_entropy(rho) for label, rho in observer_states.items()}
    distributions = {label: rho.diagonal() for label, rho in observer_states.items()}
    ranked = sorted(entropies, key=lambda label: entropies[label])
    groups: list[list[str]] = []
    for label in ranked:
        if groups and entropies[label] - entropies[groups[-1][-1]] < order_tol:
            groups[-1].append(label)
        else:
            groups.append([label])
    order = tuple(tuple(g) for g in groups)
    return EntropyReport(entropies, distributions, order, order_tol)


def emergent_probabilities(state: ChainState, order_tol: float = ORDER_TOL) -> EntropyReport:
    """Entropies and outcome distributions read off the reduced registers."""
    if state.completed_steps == 0:
        raise ValueError("emergent_probabilities requires at least one completed step")
    states = {s.label: observer_state(state, s.label) for s in state.steps}
    return build_entropy_report(states, order_tol)


def _measurement_bases(spec: ChainSpec) -> list[np.ndarray]:
    """For each step, the matrix mapping alpha-basis amplitudes to that step's basis."""
    out = []
    b = np.eye(spec.dim, dtype=complex)
    for step in spec.steps:
        b = step.overlap.u.T @ b
        out.append(b)
    return out


def _luders_sequence(
    alpha: np.ndarray,
    measurements: list[tuple[str, np.ndarray]],
    ordering: tuple[int, ...],
) -> dict[str, np.ndarray]:
    """Distributions from non-selective projections applied in the given order.

    Each measurement is (label, basis map B); row j of B is the bra of
    outcome j in the alpha basis. The distribution for a measurement is read
    at its application time, after summing over all earlier outcomes.
    """
    rho = np.outer(alpha, alpha.conj())
    out: dict[str, np.ndarray] = {}
    for k in ordering:
        label, b = measurements[k]
        # p_j = <b_j| rho |b_j>; rows of b are the outcome bras
        p = np.real(np.einsum("jx,xy,jy->j", b, rho, b.conj()))
        out[label] = p
        # sum_j P_j rho P_j collapses to kets diag(p) kets^dagger
        kets = b.conj().T
        rho = (kets * p) @ kets.conj().T
    return out


def projective_oracle(spec: ChainSpec, ordering) -> dict[str, np.ndarray]:
    """Outcome distributions under time-ordered Lueders projections.

    `ordering` is a permutation of the chain's step labels (or indices); the
    measurement operators themselves are fixed by the chain, only the order
    of application varies. This is the collapse bookkeeping the emergent
    statistics are checked against.
    """
    labels = list(spec.labels)
    perm = []
    for item in ordering:
        idx = labels.index(item) if isinstance(item, str) else int(item)
        if idx < 0 or idx >= len(labels):
            raise ValueError(f"ordering entry {item!r} does not name a step")
        perm.append(idx)
    if sorted(perm) != list(range(len(labels))):
        raise ValueError(f"ordering {ordering!r} is not a permutation of the steps")
    bases = _measurement_bases(spec)
    measurements = [(labels[k], bases[k]) for k in range(len(labels))]
    return _luders_sequence(spec.alpha, measurements, tuple(perm))


@dataclass(frozen=True)
class BidirectionalResult:
    """Two branch reports plus the global-ordering consistency verdict."""

    right: EntropyReport
    left: EntropyReport
    consistent: bool
    witness: tuple[str, ...] | None
    best_deviation: float  # min over orderings of the worst per-observer TV distance


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def bidirectional_scenario(
    spec_right: ChainSpec, spec_left: ChainSpec, order_tol: float = ORDER_TOL
) -> BidirectionalResult:
    """Two chains leaving the shared state in opposite time directions.

    Each branch is simulated independently. The verdict asks whether any
    single global ordering of all the steps, applied as a plain projection
    sequence, reproduces every observer's emergent distribution; the search
    is exhaustive over orderings.
    """
    if spec_right.dim != spec_left.dim or not np.allclose(
        spec_right.alpha, spec_left.alpha, atol=1e-12
    ):
        raise ValueError("branches must share the same t=0 amplitudes")
    shared = set(spec_right.labels) & set(spec_left.labels)
    if shared:
        raise ValueError(f"branches reuse observer labels {sorted(shared)}")

    reports = {}
    targets: dict[str, np.ndarray] = {}
    for side, spec in (("right", spec_right), ("left", spec_left)):
        if spec.steps:
            report = emergent_probabilities(run_chain(spec), order_tol)
            targets.update(report.distributions)
        else:
            report = EntropyReport({}, {}, (), order_tol)
        reports[side] = report

    measurements: list[tuple[str, np.ndarray]] = []
    for spec in (spec_right, spec_left):
        bases = _measurement_bases(spec)
        measurements += [(spec.labels[k], bases[k]) for k in range(len(spec.steps))]

    best = np.inf
    witness = None
    for perm in itertools.permutations(range(len(measurements))):
        dists = _luders_sequence(spec_right.alpha, measurements, perm)
        worst = max(total_variation(dists[lab], targets[lab]) for lab in dists)
        if worst < best:
            best = worst
            if worst <= order_tol:
                witness = tuple(measurements[k][0] for k in perm)
                break
    return BidirectionalResult(
        right=reports["right"],
        left=reports["left"],
        consistent=witness is not None,
        witness=witness,
        best_deviation=float(best),
    )
