"""Discretized covariant kinematics for a parametrized particle.

The extended configuration space is a periodic x-lattice times a t-lattice,
with time a configuration variable like any other. Physical states are built
from kinematical data by smearing against the propagator kernel W, and all
probabilities come from the W-weighted (physical) inner product.

Discretization conventions, used consistently everywhere:

* integrals over configuration space become Riemann sums weighted by the
  lattice measure (product of the continuum-axis spacings);
* delta functions become Kronecker deltas divided by the corresponding axis
  measure. A state or smearing confined to a single time slice therefore
  carries a factor 1/dt, which is what makes equal-time expressions reduce
  exactly to ordinary quantum mechanics on the slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateNormError
from .qlinalg import evolve

__all__ = [
    "Axis",
    "Lattice",
    "KinematicalState",
    "PropagatorKernel",
    "Region",
    "build_parametrized_particle",
    "build_propagator",
    "project",
    "physical_inner",
    "physical_norm",
    "probability_region",
    "slice_state",
    "slice_profile",
    "gaussian_profile",
    "constraint_residual",
]


@dataclass(frozen=True)
class Axis:
    name: str
    role: str  # "space" | "time" | "pointer"
    size: int
    spacing: float = 1.0
    origin: float = 0.0

    def __post_init__(self):
        if self.role not in ("space", "time", "pointer"):
            raise ValueError(f"unknown axis role {self.role!r}")
        if self.size < 2:
            raise ValueError(f"axis {self.name!r} needs at least 2 points")
        if self.role != "pointer" and self.spacing <= 0:
            raise ValueError(f"axis {self.name!r} needs positive spacing")

    def coords(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.size)


@dataclass(frozen=True)
class Lattice:
    """Axes of the extended configuration space, in fixed layout order.

    Axis 0 is the space coordinate, axis 1 the time coordinate; any pointer
    registers follow. Value arrays are indexed in exactly this order.
    """

    axes: tuple[Axis, ...]

    def __post_init__(self):
        axes = tuple(self.axes)
        if len(axes) < 2 or axes[0].role != "space" or axes[1].role != "time":
            raise ValueError("lattice layout must be (space, time, pointers...)")
        if any(a.role != "pointer" for a in axes[2:]):
            raise ValueError("axes after (space, time) must be pointer registers")
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names {names}")
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def nx(self) -> int:
        return self.axes[0].size

    @property
    def nt(self) -> int:
        return self.axes[1].size

    @property
    def dx(self) -> float:
        return self.axes[0].spacing

    @property
    def dt(self) -> float:
        return self.axes[1].spacing

    @property
    def measure(self) -> float:
        """Volume element of the continuum axes (pointer registers are sums)."""
        out = 1.0
        for a in self.axes:
            if a.role != "pointer":
                out *= a.spacing
        return out

    @property
    def pointer_dims(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes[2:])

    def pointer_axis(self, name: str) -> int:
        """Value-array axis index of the named pointer register."""
        for k, a in enumerate(self.axes[2:]):
            if a.name == name:
                return 2 + k
        raise ValueError(f"no pointer register named {name!r}")

    def x_coords(self) -> np.ndarray:
        return self.axes[0].coords()

    def t_coords(self) -> np.ndarray:
        return self.axes[1].coords()

    def q_sector(self) -> Lattice:
        """The (space, time) sub-lattice with pointer registers dropped."""
        return Lattice(self.axes[:2]) if len(self.axes) > 2 else self


@dataclass(frozen=True)
class KinematicalState:
    """Complex function on the lattice; a carrier of locally specified data."""

    values: np.ndarray
    lattice: Lattice
    normalized: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != self.lattice.shape:
            raise ValueError(
                f"values shape {values.shape} does not match lattice {self.lattice.shape}"
            )
        if not np.all(np.isfinite(values.view(float))):
            raise ValueError("state contains non-finite values")
        if self.normalized and abs(self.l2_norm_of(values) - 1.0) >= 1e-9:
            raise ValueError("state flagged normalized is not unit in the lattice L2 norm")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def l2_norm_of(self, values) -> float:
        return float(np.sqrt(np.sum(np.abs(values) ** 2) * self.lattice.measure))

    @property
    def l2_norm(self) -> float:
        return self.l2_norm_of(self.values)


@dataclass
class PropagatorKernel:
    """The kernel W(p;p') over lattice points, as time-difference blocks.

    W((x,t);(x',t')) is the matrix element of exp(-i H (t-t')) between x and
    x', divided by the x measure, so the equal-time block is the discrete
    delta. Defined for either sign of t-t'. `dense()` materializes the full
    point-by-point matrix, flattened row-major over (x, t); the block form is
    what the operations use.
    """

    lattice: Lattice
    hamiltonian: np.ndarray
    model_tag: str = "parametrized-particle"
    _eig: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False)
    _steps: dict[int, np.ndarray] = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.lattice = self.lattice.q_sector()
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.shape != (self.lattice.nx, self.lattice.nx):
            raise ValueError(f"Hamiltonian shape {h.shape} does not fit nx={self.lattice.nx}")
        if np.linalg.norm(h - h.conj().T) >= 1e-10:
            raise ValueError("Hamiltonian is not Hermitian within tolerance")
        w, v = np.linalg.eigh(h)
        self._eig = (w, v)

    def step_unitary(self, steps: int) -> np.ndarray:
        """exp(-i H dt steps) acting on slice value vectors."""
        steps = int(steps)
        got = self._steps.get(steps)
        if got is None:
            w, v = self._eig
            got = (v * np.exp(-1j * w * self.lattice.dt * steps)) @ v.conj().T
            got.setflags(write=False)
            self._steps[steps] = got
        return got

    def block(self, ti: int, tj: int) -> np.ndarray:
        """W between time slices ti and tj, an nx-by-nx matrix."""
        return self.step_unitary(ti - tj) / self.lattice.dx

    def entry(self, p: tuple[int, int], q: tuple[int, int]) -> complex:
        return complex(self.block(p[1], q[1])[p[0], q[0]])

    def dense(self) -> np.ndarray:
        """Full (nx*nt) x (nx*nt) matrix; points flattened row-major over (x, t)."""
        nx, nt = self.lattice.nx, self.lattice.nt
        out = np.empty((nx, nt, nx, nt), dtype=complex)
        for ti in range(nt):
            for tj in range(nt):
                out[:, ti, :, tj] = self.block(ti, tj)
        return out.reshape(nx * nt, nx * nt)


def build_parametrized_particle(
    nx: int,
    dx: float,
    nt: int,
    dt: float,
    mass: float,
    potential=None,
) -> tuple[Lattice, np.ndarray]:
    """Lattice and Hamiltonian for a particle with time as a configuration axis.

    The Hamiltonian is the standard three-point finite-difference kinetic
    term (periodic in x) plus a diagonal potential, which may be given as an
    array over x or as a callable of the x coordinates.
    """
    if mass <= 0:
        raise ValueError("mass must be positive")
    x_axis = Axis("x", "space", int(nx), float(dx), origin=-(int(nx) // 2) * float(dx))
    t_axis = Axis("t", "time", int(nt), float(dt))
    lattice = Lattice((x_axis, t_axis))
    coupling = 1.0 / (2.0 * mass * dx * dx)
    h = np.zeros((nx, nx), dtype=complex)
    for i in range(nx):
        h[i, i] += 2.0 * coupling
        h[i, (i + 1) % nx] -= coupling
        h[i, (i - 1) % nx] -= coupling
    if potential is not None:
        v = potential(lattice.x_coords()) if callable(potential) else np.asarray(potential)
        v = np.broadcast_to(np.asarray(v, dtype=float), (nx,))
        h += np.diag(v)
    return lattice, h


def build_propagator(lattice: Lattice, hamiltonian: np.ndarray) -> PropagatorKernel:
    return PropagatorKernel(lattice, hamiltonian)


def _check_same_lattice(a: Lattice, b: Lattice):
    if a.shape[:2] != b.shape[:2] or a.dx != b.dx or a.dt != b.dt:
        raise ValueError("states live on different lattices")


def project(phi: KinematicalState, kernel: PropagatorKernel) -> KinematicalState:
    """Smear a kinematical state with W to obtain a physical representative.

    The result solves the discrete constraint: each time slice is the
    one-step evolution of the previous one.
    """
    lattice = kernel.lattice
    _check_same_lattice(phi.lattice, lattice)
    if phi.values.ndim != 2:
        raise ValueError("project applies to states of the Q sector (x, t)")
    nt = lattice.nt
    out = np.zeros((lattice.nx, nt), dtype=complex)
    measure = lattice.measure
    for tj in range(nt):
        col = phi.values[:, tj]
        if not col.any():
            continue
        for ti in range(nt):
            out[:, ti] += kernel.block(ti, tj) @ col * measure
    return KinematicalState(out, lattice)


def physical_inner(
    phi1: KinematicalState, phi2: KinematicalState, kernel: PropagatorKernel
) -> complex:
    """<phi1, W phi2> with the measure-squared weight of the double integral."""
    lattice = kernel.lattice
    _check_same_lattice(phi1.lattice, lattice)
    _check_same_lattice(phi2.lattice, lattice)
    if phi1.values.ndim != 2 or phi2.values.ndim != 2:
        raise ValueError("physical_inner applies to states of the Q sector (x, t)")
    measure2 = lattice.measure**2
    acc = 0.0 + 0.0j
    for tj in range(lattice.nt):
        col = phi2.values[:, tj]
        if not col.any():
            continue
        for ti in range(lattice.nt):
            bra = phi1.values[:, ti]
            if not bra.any():
                continue
            acc += (bra.conj() @ (kernel.block(ti, tj) @ col)) * measure2
    return complex(acc)


def physical_norm(phi: KinematicalState, kernel: PropagatorKernel) -> float:
    n = physical_inner(phi, phi, kernel)
    return float(np.sqrt(max(n.real, 0.0)))


@dataclass(frozen=True)
class Region:
    """A set of (x, t) lattice points with a smearing profile.

    The default smearing is uniform; `normalization` chooses between the
    L2-normalized smear ("normalized", the default) and the bare indicator
    profile ("raw"). A region confined to a single time slice is smeared as
    a profile on that slice times the discrete time delta, so that its
    overlaps reduce to ordinary equal-time quantum mechanics; a region
    extending over several slices is a genuine spacetime smear.
    """

    points: tuple[tuple[int, int], ...]
    profile: np.ndarray | None = None
    normalization: str = "normalized"

    def __post_init__(self):
        pts = tuple((int(ix), int(it)) for ix, it in self.points)
        if not pts:
            raise ValueError("region must contain at least one point")
        if len(set(pts)) != len(pts):
            raise ValueError("region contains duplicate points")
        if self.normalization not in ("normalized", "raw"):
            raise ValueError(f"unknown normalization mode {self.normalization!r}")
        if self.profile is not None:
            prof = np.array(self.profile, dtype=complex).ravel()
            if prof.size != len(pts):
                raise ValueError("profile length does not match point count")
            if not np.abs(prof).max() > 0:
                raise ValueError("smearing profile is identically zero")
            prof.setflags(write=False)
            object.__setattr__(self, "profile", prof)
        object.__setattr__(self, "points", pts)

    @classmethod
    def rect(cls, x_indices, t_indices, **kwargs) -> Region:
        pts = [(ix, it) for ix in x_indices for it in t_indices]
        return cls(tuple(pts), **kwargs)

    @classmethod
    def slice_at(cls, lattice: Lattice, t_index: int, x_indices=None, **kwargs) -> Region:
        xs = range(lattice.nx) if x_indices is None else x_indices
        return cls(tuple((int(ix), int(t_index)) for ix in xs), **kwargs)

    @property
    def t_span(self) -> tuple[int, int]:
        ts = [it for _, it in self.points]
        return min(ts), max(ts)

    @property
    def is_slice(self) -> bool:
        lo, hi = self.t_span
        return lo == hi

    def measure(self, lattice: Lattice) -> float:
        """Region volume: dx per point on a slice, dx*dt per point otherwise."""
        if self.is_slice:
            return len(self.points) * lattice.dx
        return len(self.points) * lattice.dx * lattice.dt

    def state(self, lattice: Lattice) -> KinematicalState:
        """The smearing as a kinematical state on the Q sector."""
        q = lattice.q_sector()
        for ix, it in self.points:
            if not (0 <= ix < q.nx and 0 <= it < q.nt):
                raise ValueError(f"region point ({ix}, {it}) is outside the lattice")
        prof = (
            np.ones(len(self.points), dtype=complex)
            if self.profile is None
            else self.profile.copy()
        )
        if self.normalization == "normalized":
            weight = np.sum(np.abs(prof) ** 2) * (
                q.dx if self.is_slice else q.dx * q.dt
            )
            prof = prof / np.sqrt(weight)
        values = np.zeros(q.shape, dtype=complex)
        for amp, (ix, it) in zip(prof, self.points):
            values[ix, it] = amp
        if self.is_slice:
            values = values / q.dt  # discrete delta in the time direction
        return KinematicalState(values, q)


def probability_region(
    region: Region, phi: KinematicalState, kernel: PropagatorKernel
) -> float:
    """|<R, W phi>|^2 / <phi, W phi> for the region's smearing state."""
    r_state = region.state(kernel.lattice)
    n = physical_inner(phi, phi, kernel).real
    if n < 1e-14:
        raise DegenerateNormError(f"state has degenerate physical norm {n}")
    amp = physical_inner(r_state, phi, kernel)
    return float(abs(amp) ** 2 / n)


def slice_profile(lattice: Lattice, profile) -> np.ndarray:
    """Normalize a slice profile to unit lattice L2 norm on the slice."""
    f = np.asarray(profile, dtype=complex).ravel()
    if f.size != lattice.nx:
        raise ValueError(f"profile length {f.size} does not match nx={lattice.nx}")
    norm = np.sqrt(np.sum(np.abs(f) ** 2) * lattice.dx)
    if norm == 0:
        raise ValueError("profile is identically zero")
    return f / norm


def slice_state(
    lattice: Lattice, profile, t_index: int, normalize: bool = True
) -> KinematicalState:
    """Kinematical state carrying `profile` on one time slice.

    The values include the 1/dt discrete-delta weight, so projecting the
    result yields exactly the Schroedinger evolution of the profile.
    """
    q = lattice.q_sector()
    if not 0 <= int(t_index) < q.nt:
        raise ValueError(f"slice index {t_index} outside 0..{q.nt - 1}")
    f = slice_profile(q, profile) if normalize else np.asarray(profile, dtype=complex)
    values = np.zeros(q.shape, dtype=complex)
    values[:, int(t_index)] = f / q.dt
    return KinematicalState(values, q)


def gaussian_profile(
    lattice: Lattice, center: float, width: float, momentum: float = 0.0
) -> np.ndarray:
    """Normalized Gaussian wavepacket profile over the x axis."""
    if width <= 0:
        raise ValueError("width must be positive")
    x = lattice.x_coords()
    f = np.exp(-((x - center) ** 2) / (4.0 * width**2) + 1j * momentum * x)
    return slice_profile(lattice.q_sector(), f)


def constraint_residual(phi: KinematicalState, kernel: PropagatorKernel) -> float:
    """Worst one-step propagation defect, relative to the largest slice norm."""
    vals = phi.values
    scale = max(float(np.linalg.norm(vals[:, t])) for t in range(phi.lattice.nt))
    if scale == 0:
        return 0.0
    u = kernel.step_unitary(1)
    worst = 0.0
    for t in range(phi.lattice.nt - 1):
        worst = max(worst, float(np.linalg.norm(vals[:, t + 1] - u @ vals[:, t])))
    return worst / scale
