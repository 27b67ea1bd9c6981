"""Truncated Hilbert space of a two-level atom and two cavity modes.

Basis kets are labelled ``|s, n_a, n_b>`` with ``s = 0`` for the lower
level g and ``s = 1`` for the upper level e.  The atom index varies
slowest and the mode-b photon number fastest::

    index = (s * (n_max_a + 1) + n_a) * (n_max_b + 1) + n_b

All objects in this module are immutable: the wrapped arrays are flagged
read-only on construction.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

G, E = 0, 1
LEVELS = {"g": G, "e": E}

TRUNCATION_TOL = 1e-4
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8
DEGENERATE_PROB = 1e-12


class TruncationError(ValueError):
    """Raised when a field state does not fit inside the requested cutoff."""


class DegenerateConditionError(ValueError):
    """Raised when conditioning on an outcome of (near) zero probability."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _level(atom_level) -> int:
    if isinstance(atom_level, str):
        try:
            return LEVELS[atom_level]
        except KeyError:
            raise ValueError(f"unknown atomic level {atom_level!r}") from None
    if atom_level not in (G, E):
        raise ValueError(f"atomic level must be 0 (g) or 1 (e), got {atom_level}")
    return int(atom_level)


@dataclass(frozen=True)
class FockSpaceConfig:
    n_max_a: int
    n_max_b: int
    atom_dim: int = 2

    def __post_init__(self):
        if self.n_max_a < 0 or self.n_max_b < 0:
            raise ValueError("photon-number cutoffs must be non-negative")
        if self.atom_dim != 2:
            raise ValueError("only a two-level atom is supported")

    @property
    def dim_a(self) -> int:
        return self.n_max_a + 1

    @property
    def dim_b(self) -> int:
        return self.n_max_b + 1

    @property
    def dims(self) -> tuple[int, int, int]:
        return (2, self.dim_a, self.dim_b)

    @property
    def dim(self) -> int:
        return 2 * self.dim_a * self.dim_b

    def labels(self) -> Iterator[tuple[int, int, int]]:
        """Basis labels in index order."""
        for s in (G, E):
            for na in range(self.dim_a):
                for nb in range(self.dim_b):
                    yield s, na, nb

    def label_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s, na, nb = np.indices(self.dims).reshape(3, -1)
        return s, na, nb


def basis_index(atom_level, n_a: int, n_b: int, space: FockSpaceConfig) -> int:
    s = _level(atom_level)
    if not (0 <= n_a <= space.n_max_a and 0 <= n_b <= space.n_max_b):
        raise IndexError(
            f"photon numbers ({n_a}, {n_b}) outside cutoff "
            f"({space.n_max_a}, {space.n_max_b})"
        )
    return (s * space.dim_a + n_a) * space.dim_b + n_b


def basis_label(index: int, space: FockSpaceConfig) -> tuple[int, int, int]:
    """Inverse of :func:`basis_index`."""
    if not 0 <= index < space.dim:
        raise IndexError(f"index {index} outside dimension {space.dim}")
    rest, nb = divmod(index, space.dim_b)
    s, na = divmod(rest, space.dim_a)
    return s, na, nb


@dataclass(frozen=True)
class LinearOperator:
    matrix: np.ndarray
    space: FockSpaceConfig

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"operator shape {m.shape} does not match dimension {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "LinearOperator":
        return LinearOperator(self.matrix.conj().T, self.space)

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return LinearOperator(self.matrix @ other.matrix, self.space)
        if isinstance(other, StateVector):
            return StateVector(self.matrix @ other.amplitudes, self.space, check=False)
        return NotImplemented

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        return LinearOperator(self.matrix + other.matrix, self.space)

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        return LinearOperator(self.matrix - other.matrix, self.space)

    def __mul__(self, scalar) -> "LinearOperator":
        return LinearOperator(scalar * self.matrix, self.space)

    __rmul__ = __mul__

    def is_hermitian(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)


@dataclass(frozen=True, init=False)
class StateVector:
    amplitudes: np.ndarray
    space: FockSpaceConfig

    def __init__(self, amplitudes, space: FockSpaceConfig, check: bool = True):
        amp = _frozen(np.ravel(amplitudes))
        if amp.shape != (space.dim,):
            raise ValueError(f"state length {amp.size} does not match dimension {space.dim}")
        if check and abs(np.linalg.norm(amp) - 1.0) > 1e-9:
            raise ValueError(f"state is not normalized (norm {np.linalg.norm(amp):.3e})")
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "space", space)

    @classmethod
    def basis(cls, atom_level, n_a: int, n_b: int, space: FockSpaceConfig) -> "StateVector":
        amp = np.zeros(space.dim, complex)
        amp[basis_index(atom_level, n_a, n_b, space)] = 1.0
        return cls(amp, space)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()), self.space.dims)


@dataclass(frozen=True, init=False)
class DensityOperator:
    """Density matrix on a tensor product with the given factor dimensions.

    ``dims == (2, n_max_a + 1, n_max_b + 1)`` for atom-field states; field-only
    operators use ``(n_max_a + 1, n_max_b + 1)`` and single-mode states ``(n_max + 1,)``.
    """

    matrix: np.ndarray
    dims: tuple[int, ...]

    def __init__(self, matrix, dims: Sequence[int], check: bool = True):
        m = _frozen(matrix)
        dims = tuple(int(d) for d in dims)
        size = math.prod(dims)
        if m.shape != (size, size):
            raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)
        if check:
            self.validate()

    @property
    def space(self) -> FockSpaceConfig:
        if len(self.dims) != 3 or self.dims[0] != 2:
            raise AttributeError("only atom-field states carry a FockSpaceConfig")
        return FockSpaceConfig(self.dims[1] - 1, self.dims[2] - 1)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def validate(self) -> None:
        herm = self.hermiticity_error()
        if herm > HERMITIAN_TOL:
            raise ValueError(f"density operator not Hermitian (error {herm:.2e})")
        tr = self.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density operator trace {tr!r} differs from 1")
        lam = self.min_eigenvalue()
        if lam < -POSITIVITY_TOL:
            raise ValueError(f"density operator has negative eigenvalue {lam:.2e}")

    def populations(self) -> np.ndarray:
        return np.clip(np.diag(self.matrix).real, 0.0, None)

    def fidelity_pure(self, psi: StateVector) -> float:
        v = psi.amplitudes
        return float(np.real(v.conj() @ self.matrix @ v))


def build_mode_operator(mode: str, kind: str, space: FockSpaceConfig) -> LinearOperator:
    """Annihilation, creation or number operator of mode ``'a'`` or ``'b'``."""
    if mode not in ("a", "b"):
        raise ValueError(f"mode must be 'a' or 'b', got {mode!r}")
    n_max = space.n_max_a if mode == "a" else space.n_max_b
    lower = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1)
    if kind == "annihilate":
        single = lower
    elif kind == "create":
        single = lower.T
    elif kind == "number":
        single = np.diag(np.arange(n_max + 1, dtype=float))
    else:
        raise ValueError(f"unknown mode operator kind {kind!r}")
    eye_a, eye_b = np.eye(space.dim_a), np.eye(space.dim_b)
    if mode == "a":
        full = np.kron(np.eye(2), np.kron(single, eye_b))
    else:
        full = np.kron(np.eye(2), np.kron(eye_a, single))
    return LinearOperator(full, space)


_ATOMIC = {
    "lower": np.array([[0.0, 1.0], [0.0, 0.0]]),  # |g><e|
    "raise": np.array([[0.0, 0.0], [1.0, 0.0]]),  # |e><g|
    "project_g": np.diag([1.0, 0.0]),
    "project_e": np.diag([0.0, 1.0]),
}


def build_atomic_operator(kind: str, space: FockSpaceConfig) -> LinearOperator:
    try:
        single = _ATOMIC[kind]
    except KeyError:
        raise ValueError(f"unknown atomic operator kind {kind!r}") from None
    return LinearOperator(np.kron(single, np.eye(space.dim_a * space.dim_b)), space)


def excitation_operator(space: FockSpaceConfig) -> LinearOperator:
    """Total excitation number ``project_e + n_a + n_b``."""
    s, na, nb = space.label_arrays()
    return LinearOperator(np.diag((s + na + nb).astype(float)), space)


def identity(space: FockSpaceConfig) -> LinearOperator:
    return LinearOperator(np.eye(space.dim), space)


def thermal_probabilities(n_mean: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    if n_mean == 0:
        return (n == 0).astype(float)
    return n_mean**n / (1.0 + n_mean) ** (n + 1)


def poisson_probabilities(n_mean: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    if n_mean == 0:
        return (n == 0).astype(float)
    logp = -n_mean + n * math.log(n_mean) - np.array([math.lgamma(k + 1) for k in n])
    return np.exp(logp)


def required_cutoff(kind: str, value: float = 0.0, tol: float = TRUNCATION_TOL) -> int:
    """Smallest photon cutoff that keeps at least ``1 - tol`` of the population."""
    if kind == "fock":
        return int(value)
    if kind not in ("coherent", "thermal"):
        raise ValueError(f"unknown field kind {kind!r}")
    n_mean = abs(value) ** 2 if kind == "coherent" else float(value)
    if n_mean == 0:
        return 0
    probs = poisson_probabilities if kind == "coherent" else thermal_probabilities
    n_max = max(1, int(math.ceil(n_mean)))
    while 1.0 - probs(n_mean, n_max).sum() > tol:
        n_max += 1
    return n_max


def default_cutoff(kind: str, value: float = 0.0) -> int:
    """Cutoff used when none is given: ``mean + 4 sqrt(mean)`` raised if needed."""
    if kind == "fock":
        return int(value)
    n_mean = abs(value) ** 2 if kind == "coherent" else float(value)
    guess = int(math.ceil(n_mean + 4.0 * math.sqrt(n_mean)))
    return max(guess, required_cutoff(kind, value))


def make_field_state(kind: str, value: float | complex = 0, n_max: int | None = None) -> DensityOperator:
    """Single-mode field state.

    ``kind`` is ``'fock'`` (value = photon number), ``'coherent'`` (value =
    complex amplitude alpha) or ``'thermal'`` (value = mean photon number).
    Coherent and thermal states are renormalized after truncation.
    """
    if n_max is None:
        n_max = default_cutoff(kind, value)
    if kind == "fock":
        n = int(value)
        if not 0 <= n <= n_max:
            raise TruncationError(f"Fock state |{n}> does not fit under cutoff {n_max}")
        rho = np.zeros((n_max + 1, n_max + 1))
        rho[n, n] = 1.0
        return DensityOperator(rho, (n_max + 1,))
    if kind == "coherent":
        alpha = complex(value)
        n = np.arange(n_max + 1)
        amp = poisson_probabilities(abs(alpha) ** 2, n_max) ** 0.5 * np.exp(1j * np.angle(alpha) * n)
        deficit = 1.0 - np.sum(np.abs(amp) ** 2)
        if deficit > TRUNCATION_TOL:
            raise TruncationError(
                f"coherent state |alpha|^2={abs(alpha) ** 2:g} loses {deficit:.2e} of its population "
                f"at cutoff {n_max}; use n_max >= {required_cutoff('coherent', alpha)}"
            )
        amp = amp / np.linalg.norm(amp)
        return DensityOperator(np.outer(amp, amp.conj()), (n_max + 1,))
    if kind == "thermal":
        if value < 0:
            raise ValueError("thermal mean photon number must be non-negative")
        p = thermal_probabilities(float(value), n_max)
        deficit = 1.0 - p.sum()
        if deficit > TRUNCATION_TOL:
            raise TruncationError(
                f"thermal state n={value:g} loses {deficit:.2e} of its population "
                f"at cutoff {n_max}; use n_max >= {required_cutoff('thermal', value)}"
            )
        return DensityOperator(np.diag(p / p.sum()), (n_max + 1,))
    raise ValueError(f"unknown field kind {kind!r}")


def compose_initial_state(
    atom_level, field_a: DensityOperator, field_b: DensityOperator, space: FockSpaceConfig | None = None
) -> DensityOperator:
    s = _level(atom_level)
    if space is None:
        space = FockSpaceConfig(field_a.dim - 1, field_b.dim - 1)
    if field_a.dims != (space.dim_a,) or field_b.dims != (space.dim_b,):
        raise ValueError(
            f"field dimensions {field_a.dims}, {field_b.dims} do not match space {space.dims}"
        )
    atom = np.zeros((2, 2))
    atom[s, s] = 1.0
    return DensityOperator(np.kron(atom, np.kron(field_a.matrix, field_b.matrix)), space.dims)


def _diag_tensor(rho: DensityOperator) -> np.ndarray:
    return rho.populations().reshape(rho.dims)


def photon_distribution(rho: DensityOperator, mode: str) -> np.ndarray:
    """Photon-number probabilities of mode ``'a'`` or ``'b'``.

    Accepts atom-field states ``(2, da, db)`` and field-only states ``(da, db)``.
    """
    pops = _diag_tensor(rho)
    axes = {3: {"a": 1, "b": 2}, 2: {"a": 0, "b": 1}}[pops.ndim]
    keep = axes[mode]
    p = pops.sum(axis=tuple(i for i in range(pops.ndim) if i != keep))
    return p / p.sum()


def joint_photon_distribution(rho: DensityOperator) -> np.ndarray:
    """``p[n_a, n_b]`` for an atom-field or field-only state."""
    pops = _diag_tensor(rho)
    if pops.ndim == 3:
        pops = pops.sum(axis=0)
    return pops / pops.sum()


def conditional_field_state(rho: DensityOperator, atom_level) -> tuple[float, DensityOperator]:
    """Project on an atomic level, trace the atom out and renormalize."""
    s = _level(atom_level)
    n_f = rho.dim // 2
    block = rho.matrix[s * n_f:(s + 1) * n_f, s * n_f:(s + 1) * n_f]
    prob = float(np.trace(block).real)
    if prob < DEGENERATE_PROB:
        raise DegenerateConditionError(
            f"probability of finding the atom in {'ge'[s]} is {prob:.1e}"
        )
    return prob, DensityOperator(block / prob, rho.dims[1:], check=False)


def expectation(op: LinearOperator, rho: DensityOperator) -> complex:
    if op.matrix.shape != rho.matrix.shape:
        raise ValueError(f"operator shape {op.matrix.shape} does not match state {rho.matrix.shape}")
    # trace(A B) without forming the product
    return complex(np.sum(op.matrix * rho.matrix.T))


# -- plain-text dumps ---------------------------------------------------------

def dump_state(psi: StateVector) -> str:
    out = io.StringIO()
    out.write(f"# state dims {' '.join(map(str, psi.space.dims))}\n")
    for i, z in enumerate(psi.amplitudes):
        out.write(f"{i} {z.real:.17g} {z.imag:.17g}\n")
    return out.getvalue()


def dump_operator(matrix: np.ndarray, dims: Sequence[int]) -> str:
    """Nonzero elements as ``row col re im`` rows."""
    out = io.StringIO()
    out.write(f"# operator dims {' '.join(map(str, dims))}\n")
    rows, cols = np.nonzero(matrix)
    for r, c in zip(rows, cols):
        z = matrix[r, c]
        out.write(f"{r} {c} {z.real:.17g} {z.imag:.17g}\n")
    return out.getvalue()


def _parse_header(line: str, kind: str) -> tuple[int, ...]:
    parts = line.split()
    if parts[:3] != ["#", kind, "dims"]:
        raise ValueError(f"expected '# {kind} dims ...' header, got {line!r}")
    return tuple(int(x) for x in parts[3:])


def load_state(text: str) -> StateVector:
    lines = text.strip().splitlines()
    dims = _parse_header(lines[0], "state")
    space = FockSpaceConfig(dims[1] - 1, dims[2] - 1)
    amp = np.zeros(space.dim, complex)
    for line in lines[1:]:
        i, re, im = line.split()
        amp[int(i)] = complex(float(re), float(im))
    return StateVector(amp, space, check=False)


def load_operator(text: str) -> tuple[np.ndarray, tuple[int, ...]]:
    lines = text.strip().splitlines()
    dims = _parse_header(lines[0], "operator")
    size = math.prod(dims)
    m = np.zeros((size, size), complex)
    for line in lines[1:]:
        r, c, re, im = line.split()
        m[int(r), int(c)] = complex(float(re), float(im))
    return m, dims
