"""Truncated Fourier model of the quantum torus.

States are coefficient vectors over the window of modes n in Z^m with
|n_k| <= N_k, basis functions exp(i n.phi). Operators are dense matrices over
that window with compression semantics: any contribution whose target mode
leaves the window is dropped, which keeps compressions of self-adjoint
operators Hermitian.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InputError
from .geometry import TWO_PI, Polynomial, TrigPoly, as_int_tuple

ALLOWED_LAMBDA = (-0.5, 0.0, 0.5)
FLAG_TOL = 1e-12


def validate_lambda(lam, m: int) -> tuple:
    lam = tuple(float(v) for v in np.atleast_1d(np.asarray(lam, dtype=float)))
    if len(lam) != m:
        raise InputError(f"lambda has {len(lam)} entries, expected {m}")
    for v in lam:
        if v not in ALLOWED_LAMBDA:
            raise InputError(f"lambda must be in {{-1/2, 0, 1/2}}, got {v}")
    return tuple(v + 0.0 for v in lam)  # fold -0.0


@dataclass(frozen=True)
class ModeLattice:
    """Symmetric window of Fourier modes in lexicographic order."""

    N: tuple

    def __post_init__(self):
        N = tuple(int(v) for v in np.atleast_1d(self.N))
        if not N or any(v < 0 for v in N):
            raise InputError(f"cutoff must be non-negative integers, got {self.N}")
        object.__setattr__(self, "N", N)

    @classmethod
    def uniform(cls, m: int, N: int) -> "ModeLattice":
        return cls((N,) * m)

    @property
    def m(self) -> int:
        return len(self.N)

    @property
    def shape(self) -> tuple:
        return tuple(2 * n + 1 for n in self.N)

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def modes(self) -> np.ndarray:
        """(dim, m) integer array of multi-indices in lattice order."""
        axes = [range(-n, n + 1) for n in self.N]
        return np.array(list(itertools.product(*axes)), dtype=int).reshape(-1, self.m)

    def index(self, n) -> int:
        n = as_int_tuple(n, self.m, "mode")
        if any(abs(v) > c for v, c in zip(n, self.N)):
            raise InputError(f"mode {n} outside window {self.N}")
        return int(np.ravel_multi_index(tuple(v + c for v, c in zip(n, self.N)), self.shape))

    def indices(self, modes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat indices of ``modes`` rows plus the in-window mask."""
        modes = np.asarray(modes, dtype=int).reshape(-1, self.m)
        N = np.asarray(self.N)
        inside = np.all(np.abs(modes) <= N, axis=1)
        idx = np.zeros(modes.shape[0], dtype=int)
        if inside.any():
            idx[inside] = np.ravel_multi_index(tuple((modes[inside] + N).T), self.shape)
        return idx, inside

    @cached_property
    def outer_shell(self) -> np.ndarray:
        """Mask of modes with |n_k| = N_k for some axis k."""
        return np.any(np.abs(self.modes) == np.asarray(self.N), axis=1)


@dataclass(frozen=True)
class SpectralState:
    lattice: ModeLattice
    coeffs: np.ndarray
    lam: tuple = None

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex).ravel()
        if coeffs.size != self.lattice.dim:
            raise InputError(f"{coeffs.size} coefficients for a lattice of dimension "
                             f"{self.lattice.dim}")
        lam = (0.0,) * self.lattice.m if self.lam is None else self.lam
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "lam", validate_lambda(lam, self.lattice.m))

    @classmethod
    def basis(cls, lattice: ModeLattice, n, lam=None) -> "SpectralState":
        c = np.zeros(lattice.dim, dtype=complex)
        c[lattice.index(n)] = 1.0
        return cls(lattice, c, lam)

    @classmethod
    def from_modes(cls, lattice: ModeLattice, modes: dict, lam=None,
                   normalize: bool = False) -> "SpectralState":
        """Build from a sparse ``{mode tuple: coefficient}`` mapping."""
        c = np.zeros(lattice.dim, dtype=complex)
        for n, v in modes.items():
            c[lattice.index(n)] += v
        state = cls(lattice, c, lam)
        return state.normalized() if normalize else state

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.coeffs, self.coeffs).real)

    def normalized(self) -> "SpectralState":
        n2 = self.norm2
        if n2 == 0:
            raise InputError("cannot normalize the zero state")
        return self.with_coeffs(self.coeffs / np.sqrt(n2))

    def with_coeffs(self, coeffs) -> "SpectralState":
        return SpectralState(self.lattice, coeffs, self.lam)

    def coefficient(self, n) -> complex:
        return complex(self.coeffs[self.lattice.index(n)])

    def to_dict(self) -> dict:
        return {
            "m": self.lattice.m,
            "N": list(self.lattice.N),
            "lambda": list(self.lam),
            "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralState":
        try:
            lattice = ModeLattice(tuple(data["N"]))
            if int(data["m"]) != lattice.m:
                raise InputError(f"m={data['m']} disagrees with N={data['N']}")
            coeffs = np.array([complex(re, im) for re, im in data["coeffs"]])
            return cls(lattice, coeffs, data["lambda"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed spectral state: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense operator over a mode window; property flags are checked to 1e-12."""

    lattice: ModeLattice
    entries: np.ndarray
    tol: float = field(default=FLAG_TOL, compare=False)

    def __post_init__(self):
        A = np.asarray(self.entries, dtype=complex)
        if A.shape != (self.lattice.dim, self.lattice.dim):
            raise InputError(f"operator shape {A.shape} does not match lattice dimension "
                             f"{self.lattice.dim}")
        object.__setattr__(self, "entries", A)

    @cached_property
    def hermitian(self) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0) <= self.tol)

    @cached_property
    def skew_hermitian(self) -> bool:
        return bool(np.max(np.abs(self.entries + self.entries.conj().T), initial=0) <= self.tol)

    @cached_property
    def diagonal(self) -> bool:
        off = self.entries - np.diag(np.diag(self.entries))
        return bool(np.max(np.abs(off), initial=0) <= self.tol)

    def apply(self, state: SpectralState) -> SpectralState:
        if state.lattice != self.lattice:
            raise InputError("operator and state live on different lattices")
        return state.with_coeffs(self.entries @ state.coeffs)

    def __matmul__(self, other):
        if isinstance(other, SpectralState):
            return self.apply(other)
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.lattice, self.entries @ other.entries)
        return NotImplemented

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.lattice, self.entries + other.entries)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.lattice, self.entries - other.entries)

    def scaled(self, c: complex) -> "OperatorMatrix":
        return OperatorMatrix(self.lattice, c * self.entries)

    def to_dict(self) -> dict:
        return {
            "m": self.lattice.m,
            "N": list(self.lattice.N),
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in self.entries],
        }


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def _shift_pattern(lattice: ModeLattice, p) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rows, cols, source modes) for the translation n' -> n' + p inside the window."""
    p = np.asarray(as_int_tuple(p, lattice.m, "shift"))
    rows, inside = lattice.indices(lattice.modes + p)
    cols = np.nonzero(inside)[0]
    return rows[inside], cols, lattice.modes[cols]


def action_operator(lattice: ModeLattice, lam, k: int) -> OperatorMatrix:
    """Diagonal action operator with eigenvalue n_k - lambda_k (k zero-based)."""
    lam = validate_lambda(lam, lattice.m)
    if not 0 <= k < lattice.m:
        raise InputError(f"axis {k} outside 0..{lattice.m - 1}")
    return OperatorMatrix(lattice, np.diag(lattice.modes[:, k] - lam[k]).astype(complex))


def shift_operator(lattice: ModeLattice, n_shift) -> OperatorMatrix:
    """Multiplication by exp(i n_shift.phi), compressed to the window."""
    rows, cols, _ = _shift_pattern(lattice, n_shift)
    A = np.zeros((lattice.dim, lattice.dim), dtype=complex)
    A[rows, cols] = 1.0
    return OperatorMatrix(lattice, A)


def multiplication_operator(lattice: ModeLattice, b: TrigPoly) -> OperatorMatrix:
    A = np.zeros((lattice.dim, lattice.dim), dtype=complex)
    for p, c in b.fourier().items():
        rows, cols, _ = _shift_pattern(lattice, p)
        A[rows, cols] += c
    return OperatorMatrix(lattice, A)


def affine_block(lattice: ModeLattice, lam, k: int, p) -> np.ndarray:
    """Matrix of -i a d_k - (i/2) d_k a - a lambda_k for a = exp(i p.phi).

    Column n' carries (n'_k + p_k/2 - lambda_k) at row n' + p.
    """
    rows, cols, src = _shift_pattern(lattice, p)
    A = np.zeros((lattice.dim, lattice.dim), dtype=complex)
    A[rows, cols] = src[:, k] + 0.5 * np.asarray(p)[k] - lam[k]
    return A


def quantize_affine(lattice: ModeLattice, lam, a: Sequence[TrigPoly | None],
                    b: TrigPoly | None = None) -> OperatorMatrix:
    """Operator of the affine function a^k(phi) I_k + b(phi) in the angle polarization."""
    lam = validate_lambda(lam, lattice.m)
    if len(a) != lattice.m:
        raise InputError(f"need {lattice.m} coefficient functions a^k, got {len(a)}")
    A = np.zeros((lattice.dim, lattice.dim), dtype=complex)
    for k, ak in enumerate(a):
        if ak is None:
            continue
        for p, c in ak.fourier().items():
            A += c * affine_block(lattice, lam, k, p)
    if b is not None:
        A += multiplication_operator(lattice, b).entries
    return OperatorMatrix(lattice, A)


def energies(lattice: ModeLattice, lam, H: Polynomial) -> np.ndarray:
    """Spectrum E_n = H(n - lambda) in lattice order."""
    lam = np.asarray(validate_lambda(lam, lattice.m))
    if H.nvars != lattice.m:
        raise InputError(f"Hamiltonian has {H.nvars} variables, lattice has m={lattice.m}")
    return np.asarray(H(lattice.modes - lam), dtype=float).reshape(lattice.dim)


def hamiltonian_operator(lattice: ModeLattice, lam, H: Polynomial) -> OperatorMatrix:
    return OperatorMatrix(lattice, np.diag(energies(lattice, lam, H)).astype(complex))


# ---------------------------------------------------------------------------
# Pairings and diagnostics
# ---------------------------------------------------------------------------

def _check_compatible(x: SpectralState, y: SpectralState) -> None:
    if x.lattice != y.lattice:
        raise InputError(f"lattice mismatch: {x.lattice.N} vs {y.lattice.N}")
    if x.lam != y.lam:
        raise InputError(f"lambda mismatch: {x.lam} vs {y.lam}")


def inner_product(x: SpectralState, y: SpectralState) -> complex:
    """<x|y> = sum_n x_n conj(y_n), the Parseval form of the normalized torus integral."""
    _check_compatible(x, y)
    return complex(np.sum(x.coeffs * np.conj(y.coeffs)))


def l2_distance(x: SpectralState, y: SpectralState) -> float:
    _check_compatible(x, y)
    return float(np.linalg.norm(x.coeffs - y.coeffs))


def mean_action(x: SpectralState, k: int) -> float:
    """<I_k x|x> / <x|x>."""
    if not 0 <= k < x.lattice.m:
        raise InputError(f"axis {k} outside 0..{x.lattice.m - 1}")
    w = np.abs(x.coeffs) ** 2
    total = w.sum()
    if total == 0:
        raise InputError("mean action of the zero state is undefined")
    return float(np.sum((x.lattice.modes[:, k] - x.lam[k]) * w) / total)


def mean_actions(x: SpectralState) -> np.ndarray:
    return np.array([mean_action(x, k) for k in range(x.lattice.m)])


def leakage(x: SpectralState) -> float:
    """Fraction of the norm carried by the outermost retained mode shell."""
    w = np.abs(x.coeffs) ** 2
    total = w.sum()
    return float(w[x.lattice.outer_shell].sum() / total) if total else 0.0


# ---------------------------------------------------------------------------
# Grid <-> spectral transforms
# ---------------------------------------------------------------------------

def grid_points(P: int, m: int) -> np.ndarray:
    """(P^m, m) grid phi_j = 2 pi j / P in C order (last axis fastest)."""
    axis = TWO_PI * np.arange(P) / P
    mesh = np.meshgrid(*([axis] * m), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def _check_grid(lattice: ModeLattice, P: int) -> None:
    need = 2 * max(lattice.N) + 1
    if P < need:
        raise InputError(f"grid of {P} points per axis aliases cutoff {lattice.N}; "
                         f"need at least {need}")


def to_grid(x: SpectralState, P: int) -> np.ndarray:
    """Values sum_n c_n exp(i n.phi_j) on the uniform P^m grid, shape (P,)*m."""
    lattice = x.lattice
    _check_grid(lattice, P)
    arr = np.zeros((P,) * lattice.m, dtype=complex)
    arr[tuple((lattice.modes % P).T)] = x.coeffs
    return np.fft.ifftn(arr) * P ** lattice.m


def from_grid(values, lattice: ModeLattice, lam=None) -> SpectralState:
    """Discrete inverse of :func:`to_grid` projected onto the lattice window."""
    values = np.asarray(values, dtype=complex)
    m = lattice.m
    if values.ndim == 1 and m > 1:
        P = round(values.size ** (1.0 / m))
        values = values.reshape((P,) * m)
    P = values.shape[0]
    if values.shape != (P,) * m:
        raise InputError(f"grid values of shape {values.shape} are not a {m}-dimensional cube")
    _check_grid(lattice, P)
    coeffs = np.fft.fftn(values) / P ** m
    return SpectralState(lattice, coeffs[tuple((lattice.modes % P).T)], lam)


def evaluate(x: SpectralState, points, chunk: int = 4096) -> np.ndarray:
    """Band-limited interpolant sum_n c_n exp(i n.phi) at arbitrary points (B, m)."""
    points = np.asarray(points, dtype=float).reshape(-1, x.lattice.m)
    modes = x.lattice.modes.astype(float)
    out = np.empty(points.shape[0], dtype=complex)
    for s in range(0, points.shape[0], chunk):
        out[s:s + chunk] = np.exp(1j * points[s:s + chunk] @ modes.T) @ x.coeffs
    return out


def grid_lattice(P: int, m: int) -> ModeLattice:
    """Largest symmetric window resolved exactly by a P-point grid."""
    return ModeLattice(((P - 1) // 2,) * m)
