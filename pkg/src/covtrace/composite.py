"""Measurement records carried by pointer registers on the covariant lattice.

A composite model couples the lattice particle to one pointer register per
observer. Each interaction acts at a single time slice as a controlled shift
of its register, conditioned either on detector cells (groups of x points)
or on a measurement basis. The resulting history is one global solution of
the constraint; nothing in it ever collapses.

Reduced descriptions are extracted per spacetime region: the restriction of
the history to a region is split by singular values against one register,
and the register's density operator is assembled with the propagator-kernel
weight. On regions free of interactions the kernel factorizes, the density
operator is exact, and successive observers' records are related by ordinary
transition probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import EntropyReport, build_entropy_report, total_variation
from .covariant import (
    Axis,
    KinematicalState,
    Lattice,
    PropagatorKernel,
    Region,
    build_parametrized_particle,
    physical_inner,
    physical_norm,
)
from .errors import DegenerateNormError, RegionPreconditionError
from .qlinalg import DensityOperator, SCHMIDT_CUTOFF, von_neumann_entropy

__all__ = [
    "REGION_TOL",
    "LEAKAGE_TOL",
    "STOCHASTIC_TOL",
    "MAX_FACTORIZATION_SAMPLES",
    "InteractionEvent",
    "CompositeModel",
    "build_composite_model",
    "RegionValidity",
    "validate_region",
    "CovariantReducedState",
    "covariant_reduced_density",
    "TransitionAmplitudes",
    "transition_amplitudes",
    "detector_states",
    "TransitionCheck",
    "CollapseChainResult",
    "covariant_collapse_chain",
]

REGION_TOL = 1e-8
LEAKAGE_TOL = 1e-12
STOCHASTIC_TOL = 1e-6
MAX_FACTORIZATION_SAMPLES = 256


@dataclass(frozen=True)
class InteractionEvent:
    """A pointer register kicked at one time slice.

    Exactly one of `regions` (detector cells as groups of x indices) and
    `basis` (columns of a unitary as detector profiles) must be given. A
    detector whose cells do not cover the whole slice is legal but leaky:
    outcome 0 of its register then means "nothing fired".
    """

    observer: str
    time_index: int
    regions: tuple[tuple[int, ...], ...] | None = None
    basis: np.ndarray | None = None

    def __post_init__(self):
        if not self.observer:
            raise ValueError("observer label must be non-empty")
        if int(self.time_index) < 1:
            raise ValueError("interaction must happen after the initial slice")
        object.__setattr__(self, "time_index", int(self.time_index))
        if (self.regions is None) == (self.basis is None):
            raise ValueError("give either detector cells or a detector basis")
        if self.regions is not None:
            cells = tuple(tuple(int(x) for x in cell) for cell in self.regions)
            if not cells or any(not cell for cell in cells):
                raise ValueError("detector cells must be non-empty")
            flat = [x for cell in cells for x in cell]
            if len(set(flat)) != len(flat):
                raise ValueError("detector cells must be disjoint")
            object.__setattr__(self, "regions", cells)
        else:
            b = np.array(self.basis, dtype=complex)
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError("detector basis must be a square matrix")
            if np.abs(b.conj().T @ b - np.eye(b.shape[0])).max() >= 1e-10:
                raise ValueError("detector basis must be unitary")
            b.setflags(write=False)
            object.__setattr__(self, "basis", b)

    def covers_all(self, nx: int) -> bool:
        if self.basis is not None:
            return True
        return sum(len(cell) for cell in self.regions) == nx

    def cell_offset(self, nx: int) -> int:
        """Index of the first real outcome in the register (0 unless leaky)."""
        return 0 if self.covers_all(nx) else 1

    def outcome_count(self, nx: int) -> int:
        if self.basis is not None:
            return nx
        return len(self.regions) + self.cell_offset(nx)

    def shifts(self, nx: int) -> np.ndarray:
        """Register shift applied at each x point."""
        if self.basis is not None:
            raise ValueError("basis detectors do not shift by position")
        s = np.zeros(nx, dtype=int)
        off = self.cell_offset(nx)
        for k, cell in enumerate(self.regions):
            for x in cell:
                s[x] = k + off
        return s


@dataclass(eq=False)
class CompositeModel:
    """Lattice particle plus one pointer register per interaction."""

    lattice: Lattice
    hamiltonian: np.ndarray
    events: tuple[InteractionEvent, ...]
    initial_profile: np.ndarray
    _kernel: PropagatorKernel | None = field(init=False, default=None, repr=False)
    _history: KinematicalState | None = field(init=False, default=None, repr=False)
    _cum: list[np.ndarray] | None = field(init=False, default=None, repr=False)
    _step_full: np.ndarray | None = field(init=False, default=None, repr=False)

    @property
    def nx(self) -> int:
        return self.lattice.nx

    @property
    def nt(self) -> int:
        return self.lattice.nt

    @property
    def observers(self) -> tuple[str, ...]:
        return tuple(e.observer for e in self.events)

    @property
    def slice_dim(self) -> int:
        return self.nx * int(np.prod(self.lattice.pointer_dims, dtype=int))

    def kernel(self) -> PropagatorKernel:
        if self._kernel is None:
            self._kernel = PropagatorKernel(self.lattice.q_sector(), self.hamiltonian)
        return self._kernel

    def _apply_step(self, arr: np.ndarray) -> np.ndarray:
        return np.tensordot(self.kernel().step_unitary(1), arr, axes=(1, 0))

    def _apply_event(self, event: InteractionEvent, arr: np.ndarray) -> np.ndarray:
        pk = self.lattice.pointer_axis(event.observer) - 2  # slice arrays drop t
        if event.regions is not None:
            shifts = event.shifts(self.nx)
            out = np.empty_like(arr)
            for x in range(self.nx):
                out[x] = np.roll(arr[x], shifts[x], axis=pk)
            return out
        b = event.basis
        comps = np.tensordot(b.conj().T, arr, axes=(1, 0))
        for j in range(self.nx):
            comps[j] = np.roll(comps[j], j, axis=pk)
        return np.tensordot(b, comps, axes=(1, 0))

    def history(self) -> KinematicalState:
        """The global solution grown from the initial slice, slice by slice."""
        if self._history is None:
            shape = self.lattice.shape
            vals = np.zeros(shape, dtype=complex)
            cur = np.zeros((shape[0], *shape[2:]), dtype=complex)
            cur[(slice(None),) + (0,) * len(self.lattice.pointer_dims)] = (
                self.initial_profile
            )
            vals[:, 0] = cur
            for t in range(1, self.nt):
                cur = self._apply_step(cur)
                for e in self.events:
                    if e.time_index == t:
                        cur = self._apply_event(e, cur)
                vals[:, t] = cur
            self._history = KinematicalState(vals, self.lattice)
        return self._history

    def restrict(self, region: Region) -> KinematicalState:
        """History values inside the region, zero outside."""
        _check_region_bounds(self, region)
        mask = np.zeros((self.nx, self.nt), dtype=bool)
        for ix, it in region.points:
            mask[ix, it] = True
        npd = len(self.lattice.pointer_dims)
        vals = self.history().values * mask.reshape(self.nx, self.nt, *([1] * npd))
        return KinematicalState(vals, self.lattice)

    def _cumulative_ops(self, upto: int) -> list[np.ndarray]:
        if self._step_full is None:
            pdim = int(np.prod(self.lattice.pointer_dims, dtype=int))
            self._step_full = np.kron(self.kernel().step_unitary(1), np.eye(pdim))
        if self._cum is None:
            self._cum = [np.eye(self.slice_dim, dtype=complex)]
        while len(self._cum) <= upto:
            t = len(self._cum)
            g = self._step_full @ self._cum[t - 1]
            for e in self.events:
                if e.time_index == t:
                    g = self._event_matrix(e) @ g
            self._cum.append(g)
        return self._cum

    def _event_matrix(self, event: InteractionEvent) -> np.ndarray:
        d = self.slice_dim
        shape = (self.nx, *self.lattice.pointer_dims)
        mat = np.empty((d, d), dtype=complex)
        basis_vec = np.zeros(d, dtype=complex)
        for i in range(d):
            basis_vec[:] = 0
            basis_vec[i] = 1.0
            mat[:, i] = self._apply_event(event, basis_vec.reshape(shape)).ravel()
        return mat

    def full_kernel_entry(self, p, r, q, rp) -> complex:
        """Kernel of the coupled model between points with register values."""
        ops = self._cumulative_ops(max(p[1], q[1]))
        u = ops[p[1]] @ ops[q[1]].conj().T
        shape = (self.nx, *self.lattice.pointer_dims)
        i = np.ravel_multi_index((p[0], *r), shape)
        j = np.ravel_multi_index((q[0], *rp), shape)
        return complex(u[i, j] / self.lattice.dx)


def build_composite_model(
    nx: int,
    dx: float,
    nt: int,
    dt: float,
    mass: float = 1.0,
    potential=None,
    initial_profile=None,
    events=(),
) -> CompositeModel:
    q_lattice, h = build_parametrized_particle(nx, dx, nt, dt, mass, potential)
    events = tuple(events)
    times = [e.time_index for e in events]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("interaction times must be strictly increasing")
    names = [e.observer for e in events]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate observer labels {names}")
    for e in events:
        if not e.time_index < nt:
            raise ValueError(f"interaction slice {e.time_index} outside 1..{nt - 1}")
        if e.basis is not None and e.basis.shape != (nx, nx):
            raise ValueError("detector basis does not match the x lattice")
        if e.regions is not None:
            flat = [x for cell in e.regions for x in cell]
            if any(not 0 <= x < nx for x in flat):
                raise ValueError("detector cell points outside the x lattice")
    if initial_profile is None:
        raise ValueError("an initial slice profile is required")
    f = np.asarray(initial_profile, dtype=complex).ravel()
    if f.size != nx:
        raise ValueError(f"initial profile length {f.size} does not match nx={nx}")
    if abs(np.sum(np.abs(f) ** 2) * dx - 1.0) >= 1e-9:
        raise ValueError("initial profile must be unit-norm on the slice")
    axes = list(q_lattice.axes)
    for e in events:
        axes.append(Axis(e.observer, "pointer", e.outcome_count(nx)))
    return CompositeModel(Lattice(tuple(axes)), h, events, f)


def _check_region_bounds(model: CompositeModel, region: Region):
    for ix, it in region.points:
        if not (0 <= ix < model.nx and 0 <= it < model.nt):
            raise ValueError(f"region point ({ix}, {it}) is outside the lattice")


@dataclass(frozen=True)
class RegionValidity:
    """Whether the coupled kernel factorizes over a region."""

    interaction_free: bool
    residual: float
    samples: int
    tol: float = REGION_TOL

    @property
    def valid(self) -> bool:
        return self.interaction_free and self.residual < self.tol


def validate_region(
    model: CompositeModel,
    region: Region,
    tol: float = REGION_TOL,
    max_samples: int = MAX_FACTORIZATION_SAMPLES,
) -> RegionValidity:
    """Check that no interaction falls inside the region's time span and that
    sampled coupled-kernel entries match the particle kernel times the
    identity on the registers."""
    _check_region_bounds(model, region)
    lo, hi = region.t_span
    inside = [e for e in model.events if lo < e.time_index <= hi]
    pdims = model.lattice.pointer_dims
    if not pdims:
        return RegionValidity(not inside, 0.0, 0, tol)

    rng = np.random.default_rng(0)
    pts = region.points
    zero = (0,) * len(pdims)
    pairs = [(pts[0], zero, pts[0], zero), (pts[0], zero, pts[-1], zero)]
    while len(pairs) < max_samples:
        p = pts[rng.integers(len(pts))]
        q = pts[rng.integers(len(pts))]
        r = tuple(int(rng.integers(d)) for d in pdims)
        rp = tuple(int(rng.integers(d)) for d in pdims)
        pairs.append((p, r, q, rp))
    kernel = model.kernel()
    residual = 0.0
    for p, r, q, rp in pairs:
        full = model.full_kernel_entry(p, r, q, rp)
        factored = kernel.block(p[1], q[1])[p[0], q[0]] if r == rp else 0.0
        residual = max(residual, abs(full - factored))
    return RegionValidity(not inside, float(residual), len(pairs), tol)


@dataclass(frozen=True)
class CovariantReducedState:
    """A register's density operator extracted from one region."""

    rho: DensityOperator
    normalization: float
    coefficients: np.ndarray
    validity: RegionValidity
    observer: str

    @property
    def entropy(self) -> float:
        return von_neumann_entropy(self.rho)


def covariant_reduced_density(
    model: CompositeModel,
    phi: KinematicalState,
    region: Region,
    observer: str,
    validity: RegionValidity | None = None,
) -> CovariantReducedState:
    """Density operator of one register from the state's restriction to a region.

    The restriction is split by singular values against the register; the
    kernel-weighted Gram matrix of the complementary vectors supplies the
    coefficients, and the whole expression is normalized by its own trace.
    """
    axis = model.lattice.pointer_axis(observer)
    if validity is None:
        validity = validate_region(model, region)
    if not validity.valid:
        raise RegionPreconditionError(
            f"region is not interaction-free (residual {validity.residual:.2e}, "
            f"interaction_free={validity.interaction_free})"
        )
    if phi.values.shape != model.lattice.shape:
        raise ValueError("state does not live on the model lattice")
    total = float(np.sum(np.abs(phi.values) ** 2))
    mask = np.zeros((model.nx, model.nt), dtype=bool)
    for ix, it in region.points:
        mask[ix, it] = True
    npd = len(model.lattice.pointer_dims)
    inside_vals = phi.values * mask.reshape(model.nx, model.nt, *([1] * npd))
    inside = float(np.sum(np.abs(inside_vals) ** 2))
    if total == 0.0:
        raise DegenerateNormError("state is identically zero")
    if total - inside > LEAKAGE_TOL * total:
        raise RegionPreconditionError(
            f"state leaks outside the region ({(total - inside) / total:.2e} of its weight)"
        )

    pts = region.points
    a = np.stack([phi.values[ix, it] for ix, it in pts])  # (point, registers...)
    a = np.moveaxis(a, axis - 1, a.ndim - 1)  # register of interest last
    d_obs = a.shape[-1]
    m = a.reshape(-1, d_obs)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if not np.any(s > 0):
        raise DegenerateNormError("restriction to the region is identically zero")
    keep = s > SCHMIDT_CUTOFF * s[0]
    lam = s[keep]
    rest = m.shape[0] // len(pts)
    u3 = u[:, keep].reshape(len(pts), rest, lam.size)

    kernel = model.kernel()
    w_s = np.empty((len(pts), len(pts)), dtype=complex)
    for i, (ix, it) in enumerate(pts):
        for j, (jx, jt) in enumerate(pts):
            w_s[i, j] = kernel.block(it, jt)[ix, jx]
    # gram[i, j] = <u_j, W u_i>: the kernel-weighted overlap, conjugate on the
    # bra side, which keeps the assembled operator a positive Gram matrix
    q_measure = model.lattice.q_sector().measure
    gram = (q_measure**2) * np.einsum("ari,ba,brj->ij", u3, w_s, u3.conj())

    norm = complex(np.sum(lam**2 * np.diagonal(gram)))
    if abs(norm.imag) > 1e-10 * max(1.0, abs(norm.real)):
        raise DegenerateNormError(f"normalization is not real: {norm}")
    if norm.real < 1e-14:
        raise DegenerateNormError(f"normalization {norm.real:.3e} is degenerate")

    weights = (lam[:, None] * gram * lam[None, :]) / norm.real
    v = vh[keep]
    rho = v.T @ weights @ v.conj()
    rho = (rho + rho.conj().T) / 2
    return CovariantReducedState(
        DensityOperator(rho, (d_obs,)), norm.real, lam, validity, observer
    )


@dataclass(frozen=True)
class TransitionAmplitudes:
    """Physical-product overlaps between two families of detector states."""

    matrix: np.ndarray
    unitarity_residual: float
    stochastic_residual: float

    def stochastic(self) -> np.ndarray:
        return np.abs(self.matrix) ** 2


def detector_states(model: CompositeModel, event: InteractionEvent) -> list[KinematicalState]:
    """The states an interaction distinguishes, at its own time slice."""
    q = model.lattice.q_sector()
    out = []
    if event.regions is not None:
        for cell in event.regions:
            pts = tuple((int(x), event.time_index) for x in cell)
            out.append(Region(pts).state(q))
    else:
        for j in range(model.nx):
            region = Region.slice_at(q, event.time_index, profile=event.basis[:, j])
            out.append(region.state(q))
    return out


def transition_amplitudes(
    kernel: PropagatorKernel, sources, targets
) -> TransitionAmplitudes:
    """Normalized physical overlaps, source rows to target columns."""
    lattice = kernel.lattice

    def as_state(obj):
        return obj.state(lattice) if isinstance(obj, Region) else obj

    src = [as_state(s) for s in sources]
    tgt = [as_state(t) for t in targets]
    if not src or not tgt:
        raise ValueError("need at least one source and one target state")

    def norm_of(state):
        n = physical_norm(state, kernel)
        if n * n < 1e-14:
            raise DegenerateNormError("detector state has degenerate physical norm")
        return n

    n_src = [norm_of(s) for s in src]
    n_tgt = [norm_of(t) for t in tgt]
    u = np.empty((len(src), len(tgt)), dtype=complex)
    for i, s in enumerate(src):
        for j, t in enumerate(tgt):
            u[i, j] = physical_inner(t, s, kernel) / (n_src[i] * n_tgt[j])
    gram_t = np.abs(u.conj().T @ u - np.eye(len(tgt))).max()
    gram_s = np.abs(u @ u.conj().T - np.eye(len(src))).max()
    p = np.abs(u) ** 2
    stoch = max(
        np.abs(p.sum(axis=1) - 1.0).max(), np.abs(p.sum(axis=0) - 1.0).max()
    )
    return TransitionAmplitudes(u, float(max(gram_t, gram_s)), float(stoch))


@dataclass(frozen=True)
class TransitionCheck:
    """Successive records compared against transition probabilities."""

    source_observer: str
    target_observer: str
    amplitudes: TransitionAmplitudes
    weights: np.ndarray
    predicted: np.ndarray
    observed: np.ndarray
    tv: float
    downgraded: bool


@dataclass(frozen=True)
class CollapseChainResult:
    """Per-region reduced states and the checks tying them together."""

    labels: tuple[str, ...]
    states: dict[str, dict[str, CovariantReducedState]]
    checks: tuple[TransitionCheck, ...]
    report: EntropyReport
    monotonicity: dict[str, float]
    downgraded: bool

    def entropy(self, label: str, observer: str) -> float:
        return self.states[label][observer].entropy


def _default_labels(count: int) -> tuple[str, ...]:
    names = ["S", "S_prime", "S_dprime"]
    while len(names) < count:
        names.append(f"S_{len(names)}prime")
    return tuple(names[:count])


def covariant_collapse_chain(
    model: CompositeModel, regions, labels=None
) -> CollapseChainResult:
    """Reduced records in a time-ordered family of interaction-free regions.

    Regions must be separated by the model's interactions, at most one per
    gap. Every register gets a density operator in every region; successive
    records are compared through the transition probabilities between the
    corresponding detector states, and each observer's record entropy is
    checked for monotone growth across the regions.
    """
    regions = tuple(regions)
    if not regions:
        raise ValueError("at least one region is required")
    labels = _default_labels(len(regions)) if labels is None else tuple(labels)
    if len(labels) != len(regions) or len(set(labels)) != len(labels):
        raise ValueError("labels must be unique and match the regions")
    spans = [r.t_span for r in regions]
    for (lo1, hi1), (lo2, hi2) in zip(spans, spans[1:]):
        if hi1 >= lo2:
            raise RegionPreconditionError(
                "regions must be strictly ordered in time and non-overlapping"
            )

    gap_events: dict[int, InteractionEvent] = {}
    for e in model.events:
        slot = None
        for g in range(len(regions) - 1):
            if spans[g][1] < e.time_index <= spans[g + 1][0]:
                slot = g
                break
        if slot is None:
            raise RegionPreconditionError(
                f"interaction at slice {e.time_index} does not sit between "
                "consecutive regions"
            )
        if slot in gap_events:
            raise RegionPreconditionError(
                f"two interactions fall between regions {labels[slot]} and "
                f"{labels[slot + 1]}"
            )
        gap_events[slot] = e

    validities = {lab: validate_region(model, r) for lab, r in zip(labels, regions)}
    for lab in labels:
        if not validities[lab].valid:
            raise RegionPreconditionError(
                f"region {lab} is not interaction-free "
                f"(residual {validities[lab].residual:.2e})"
            )

    states: dict[str, dict[str, CovariantReducedState]] = {}
    for lab, region in zip(labels, regions):
        restricted = model.restrict(region)
        states[lab] = {
            obs: covariant_reduced_density(model, restricted, region, obs, validities[lab])
            for obs in model.observers
        }

    region_after = {e.observer: labels[g + 1] for g, e in gap_events.items()}
    checks = []
    ordered_events = [gap_events[g] for g in sorted(gap_events)]
    for e_a, e_b in zip(ordered_events, ordered_events[1:]):
        amps = transition_amplitudes(
            model.kernel(), detector_states(model, e_a), detector_states(model, e_b)
        )
        diag_a = states[region_after[e_a.observer]][e_a.observer].rho.diagonal()
        diag_b = states[region_after[e_b.observer]][e_b.observer].rho.diagonal()
        off_a = e_a.cell_offset(model.nx)
        off_b = e_b.cell_offset(model.nx)
        weights = diag_a[off_a : off_a + amps.matrix.shape[0]]
        observed = diag_b[off_b : off_b + amps.matrix.shape[1]]
        predicted = weights @ amps.stochastic()
        checks.append(
            TransitionCheck(
                e_a.observer,
                e_b.observer,
                amps,
                weights,
                predicted,
                observed,
                total_variation(predicted, observed),
                amps.stochastic_residual > STOCHASTIC_TOL,
            )
        )

    monotonicity = {}
    for obs in model.observers:
        entropies = [states[lab][obs].entropy for lab in labels]
        diffs = [b - a for a, b in zip(entropies, entropies[1:])]
        monotonicity[obs] = min(diffs) if diffs else 0.0

    final_states = {obs: states[labels[-1]][obs].rho for obs in model.observers}
    report = build_entropy_report(final_states)
    return CollapseChainResult(
        labels,
        states,
        tuple(checks),
        report,
        monotonicity,
        any(c.downgraded for c in checks),
    )
