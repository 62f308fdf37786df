"""Dense complex linear algebra over factored finite-dimensional Hilbert spaces.

Conventions used by every module downstream: factor order is positional and
fixed at construction, every reshape is row-major (C order) over that factor
order, and entropies are reported in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Eigenvalues / probabilities at or below this floor contribute 0 to entropy sums.
EIGENVALUE_FLOOR = 1e-14

# Schmidt coefficients below this are dropped from the decomposition.
SCHMIDT_CUTOFF = 1e-12

_HERMITICITY_TOL = 1e-10
_TRACE_TOL = 1e-10
_PSD_TOL = 1e-10
_UNITARITY_TOL = 1e-10

__all__ = [
    "EIGENVALUE_FLOOR",
    "SCHMIDT_CUTOFF",
    "StateVector",
    "DensityOperator",
    "SchmidtDecomposition",
    "OverlapMatrix",
    "kron",
    "partial_trace",
    "schmidt",
    "von_neumann_entropy",
    "shannon_entropy",
    "evolve",
]


def _complex_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=complex).ravel()
    if arr.size == 0:
        raise ValueError("amplitude vector is empty")
    if not np.all(np.isfinite(arr.view(float))):
        raise ValueError("amplitude vector contains non-finite entries")
    return arr


def _check_dims(dims, size: int) -> tuple[int, ...]:
    out = tuple(int(d) for d in dims)
    if not out or any(d < 1 for d in out):
        raise ValueError(f"factor dimensions must be positive integers, got {out}")
    if int(np.prod(out)) != size:
        raise ValueError(f"dims {out} imply size {int(np.prod(out))}, data has {size}")
    return out


@dataclass(frozen=True)
class StateVector:
    """Pure state over an ordered list of tensor factors."""

    amps: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        amps = _complex_vector(self.amps)
        dims = _check_dims(self.dims, amps.size)
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)
        object.__setattr__(self, "dims", dims)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> StateVector:
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amps / n, self.dims)

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per factor (row-major)."""
        return self.amps.reshape(self.dims)

    def density(self) -> DensityOperator:
        a = self.amps
        return DensityOperator(np.outer(a, a.conj()), self.dims)


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, unit-trace, positive-semidefinite operator on a factored space."""

    mat: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        mat = np.array(self.mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {mat.shape}")
        dims = _check_dims(self.dims, mat.shape[0])
        if np.linalg.norm(mat - mat.conj().T) >= _HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian within tolerance")
        tr = np.trace(mat)
        if abs(tr - 1.0) >= _TRACE_TOL:
            raise ValueError(f"density matrix trace {tr} is not 1 within tolerance")
        if float(np.linalg.eigvalsh(mat).min()) <= -_PSD_TOL:
            raise ValueError("density matrix has a negative eigenvalue beyond tolerance")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def diagonal(self) -> np.ndarray:
        """Real diagonal, the outcome distribution in the stored basis."""
        return np.real(np.diag(self.mat)).copy()


@dataclass(frozen=True)
class SchmidtDecomposition:
    """psi = sum_k coefficients[k] * left[:, k] (x) right[:, k]."""

    coefficients: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.coefficients, dtype=float)
        if lam.size == 0:
            raise ValueError("no Schmidt coefficients above cutoff")
        if np.any(np.diff(lam) > 0) or np.any(lam < 0):
            raise ValueError("Schmidt coefficients must be nonnegative and descending")
        if abs(float(np.sum(lam**2)) - 1.0) >= 1e-10:
            raise ValueError("Schmidt coefficients must satisfy sum(lambda^2) = 1")
        for fam in (self.left_vectors, self.right_vectors):
            gram = fam.conj().T @ fam
            if np.linalg.norm(gram - np.eye(lam.size)) >= 1e-9:
                raise ValueError("Schmidt vector family is not orthonormal")
        object.__setattr__(self, "coefficients", lam)

    def reconstruct(self) -> np.ndarray:
        """Flat amplitude vector of sum_k lambda_k u_k (x) v_k."""
        return np.einsum(
            "k,ik,jk->ij", self.coefficients, self.left_vectors, self.right_vectors
        ).ravel()


@dataclass(frozen=True)
class OverlapMatrix:
    """Unitary matrix of overlaps between two orthonormal measurement bases.

    Entry (i, j) is the amplitude connecting state i of the first basis with
    state j of the second; |entries|^2 is doubly stochastic as a consequence
    of unitarity, which is what forces entropy growth along a chain.
    """

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError(f"overlap matrix must be square, got shape {u.shape}")
        if np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) >= _UNITARITY_TOL:
            raise ValueError("overlap matrix is not unitary within tolerance")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    def stochastic(self) -> np.ndarray:
        """The doubly stochastic matrix |u_ij|^2."""
        return np.abs(self.u) ** 2

    @classmethod
    def identity(cls, dim: int) -> OverlapMatrix:
        return cls(np.eye(dim, dtype=complex))

    @classmethod
    def rotation(cls, angle: float) -> OverlapMatrix:
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.array([[c, s], [-s, c]], dtype=complex))

    @classmethod
    def hadamard(cls) -> OverlapMatrix:
        return cls(np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2))


def kron(a, b):
    """Tensor product; factor dims concatenate with a's factors first."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(a.amps, b.amps), a.dims + b.dims)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(np.kron(a.mat, b.mat), a.dims + b.dims)
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return np.kron(a, b)
    raise TypeError(f"kron requires two operands of the same kind, got {type(a)}, {type(b)}")


def partial_trace(rho: DensityOperator, keep) -> DensityOperator:
    """Trace out every factor not named in `keep`; kept factors stay in order."""
    kept = sorted({int(k) for k in keep})
    n = len(rho.dims)
    if not kept:
        raise ValueError("keep must name at least one factor")
    if kept[0] < 0 or kept[-1] >= n:
        raise ValueError(f"factor indices {kept} out of range for dims {rho.dims}")
    t = rho.mat.reshape(rho.dims + rho.dims)
    n_cur = n
    for ax in reversed(range(n)):
        if ax not in kept:
            t = np.trace(t, axis1=ax, axis2=ax + n_cur)
            n_cur -= 1
    d = int(np.prod([rho.dims[k] for k in kept]))
    return DensityOperator(t.reshape(d, d), tuple(rho.dims[k] for k in kept))


def schmidt(psi: StateVector, cut) -> SchmidtDecomposition:
    """Schmidt decomposition across the bipartition (cut | complement).

    `cut` lists the factor indices forming the left side. Coefficients below
    SCHMIDT_CUTOFF are dropped.
    """
    left = sorted({int(k) for k in cut})
    n = len(psi.dims)
    if not left or left[0] < 0 or left[-1] >= n:
        raise ValueError(f"invalid left-side factors {left} for dims {psi.dims}")
    right = [k for k in range(n) if k not in left]
    if not right:
        raise ValueError("cut must leave at least one factor on the right side")
    if abs(psi.norm - 1.0) > 1e-9:
        raise ValueError("schmidt requires a normalized state")
    t = psi.tensor().transpose(left + right)
    dl = int(np.prod([psi.dims[k] for k in left]))
    m = t.reshape(dl, -1)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    keep = s > SCHMIDT_CUTOFF
    return SchmidtDecomposition(s[keep], u[:, keep], vh[keep, :].T)


def von_neumann_entropy(rho: DensityOperator) -> float:
    """Entropy -sum(w log2 w) in bits over eigenvalues above EIGENVALUE_FLOOR."""
    w = np.linalg.eigvalsh(rho.mat)
    if float(w.min()) <= -_PSD_TOL:
        raise ValueError("density operator has a negative eigenvalue beyond tolerance")
    w = w[w > EIGENVALUE_FLOOR]
    return float(-np.sum(w * np.log2(w)))


def shannon_entropy(p) -> float:
    """Entropy of a probability vector in bits, with 0 log 0 = 0."""
    q = np.asarray(p, dtype=float).ravel()
    if q.size == 0:
        raise ValueError("empty probability vector")
    if float(q.min()) < -1e-12:
        raise ValueError(f"negative probability {q.min()}")
    if abs(float(q.sum()) - 1.0) >= 1e-9:
        raise ValueError(f"probabilities sum to {q.sum()}, not 1")
    q = q[q > EIGENVALUE_FLOOR]
    return float(-np.sum(q * np.log2(q)))


def evolve(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i h t) for Hermitian h, via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got shape {h.shape}")
    if np.linalg.norm(h - h.conj().T) >= _HERMITICITY_TOL:
        raise ValueError("Hamiltonian is not Hermitian within tolerance")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T
