"""Quantum holonomy evolution on the truncated torus.

The driven Schrodinger equation in initial-data coordinates is

    dPsi/dt = -v^alpha [Lambda^k_alpha d_k + (1/2) d_k Lambda^k_alpha
                        - i lambda_k Lambda^k_alpha] Psi,     v = dxi/dt,

i.e. dPsi/dt = G(t) Psi with G = -i v^alpha Q(Lambda_alpha), Q the Hermitian
quantization of the affine function Lambda^k_alpha I_k. Besides the two
time-steppers this module holds the characteristic (pullback) solution used
as an oracle, the Berry multiplier of constant connections, and the
isomorphism R between the initial-data and original quantizations.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .classical import inverse_flow, step_times
from .errors import FlowFault, InputError, IntegrationError, LeakageError, LeakageWarning
from .geometry import (
    ConnectionSpec,
    ParameterPath,
    Polynomial,
    check_dims,
    eval_connection,
    eval_connection_dphi,
    fourier_coefficients,
    path_deriv,
    path_displacement,
    path_eval,
)
from .qtorus import (
    ModeLattice,
    OperatorMatrix,
    SpectralState,
    affine_block,
    energies,
    from_grid,
    grid_lattice,
    grid_points,
    evaluate,
    leakage,
    mean_actions,
    validate_lambda,
)

LEAKAGE_WARN = 1e-6
LEAKAGE_ERROR = 1e-3
METHODS = ("rk4", "expmid")


def _term_blocks(spec: ConnectionSpec, lattice: ModeLattice, lam: tuple) -> list:
    """Per-term Q-matrices of amplitude-free harmonics, keyed by parameter index."""
    if lattice.m != spec.m:
        raise InputError(f"lattice has m={lattice.m}, connection has m={spec.m}")
    blocks = []
    for term in spec.terms:
        Q = np.zeros((lattice.dim, lattice.dim), dtype=complex)
        for p, c in fourier_coefficients([(1.0, term.harmonic, term.kind)], spec.m).items():
            Q += c * affine_block(lattice, lam, term.k, p)
        blocks.append((term.alpha, term.amplitude, Q))
    return blocks


@dataclass(frozen=True)
class GeneratorAssembly:
    """Cached matrix blocks of the holonomy generator along a drive.

    ``static`` is an optional time-independent matrix added to G(t), used for
    the full dynamics -i H(I) + G_holonomy(t).
    """

    spec: ConnectionSpec
    path: ParameterPath | None
    lattice: ModeLattice
    lam: tuple = None
    static: np.ndarray | None = None
    _blocks: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = (0.0,) * self.lattice.m if self.lam is None else self.lam
        object.__setattr__(self, "lam", validate_lambda(lam, self.lattice.m))
        if self.path is not None:
            check_dims(self.spec, self.path)
        band = self.spec.max_harmonic
        if band > min(self.lattice.N):
            warnings.warn(f"connection harmonics up to {band} exceed the cutoff {self.lattice.N}",
                          stacklevel=2)
        object.__setattr__(self, "_blocks", _term_blocks(self.spec, self.lattice, self.lam))

    def matrix(self, sigma, velocity) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        velocity = np.asarray(velocity, dtype=float)
        G = np.zeros((self.lattice.dim, self.lattice.dim), dtype=complex)
        for alpha, amp, Q in self._blocks:
            w = velocity[alpha] * amp(sigma)
            if w:
                G += (-1j * w) * Q
        if self.static is not None:
            G += self.static
        return G

    def at(self, t: float) -> np.ndarray:
        if self.path is None:
            raise InputError("generator assembly has no drive attached")
        return self.matrix(path_eval(self.path, t), path_deriv(self.path, t))


def holonomy_generator(spec: ConnectionSpec, lattice: ModeLattice, lam, sigma,
                       velocity) -> OperatorMatrix:
    """Matrix G with dPsi/dt = G Psi at parameter point ``sigma`` and drive velocity.

    For a harmonic c exp(i p.phi) of Lambda^k_alpha, column n' receives
    -velocity^alpha c i (n'_k + p_k/2 - lambda_k) at row n' + p.
    """
    assembly = GeneratorAssembly(spec, None, lattice, lam)
    return OperatorMatrix(lattice, assembly.matrix(sigma, velocity))


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropagationResult:
    state: SpectralState
    log: np.ndarray  # rows: t, norm, leakage, mean_I_1..mean_I_m
    max_leakage: float

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.log[:, 1] - self.log[0, 1])))


def _log_row(t: float, x: SpectralState) -> list:
    return [t, np.sqrt(x.norm2), leakage(x), *mean_actions(x)]


def propagate(assembly: GeneratorAssembly, x0: SpectralState, t_end: float, dt: float,
              method: str = "expmid", t0: float = 0.0, log_every: int = 1,
              leakage_policy: str = "raise") -> PropagationResult:
    """Step dx/dt = G(t) x from ``t0`` to ``t_end``.

    ``rk4`` is the classical fourth-order stepper; ``expmid`` multiplies by
    expm(h G(t + h/2)) per step and is unitary up to roundoff whenever G is
    skew-Hermitian. ``leakage_policy`` is one of ``raise``, ``warn``, ``ignore``:
    more than 1e-6 of the norm in the outer mode shell warns, more than 1e-3
    raises under ``raise``.
    """
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {METHODS}")
    if leakage_policy not in ("raise", "warn", "ignore"):
        raise InputError(f"unknown leakage policy {leakage_policy!r}")
    if x0.lattice != assembly.lattice or x0.lam != assembly.lam:
        raise InputError("initial state does not match the generator lattice/lambda")
    ts = step_times(t0, t_end, dt)
    c = x0.coeffs.copy()
    state = x0
    rows = [_log_row(ts[0], x0)]
    max_leak = rows[0][2]
    warned = False
    cache_key, cache_U = None, None
    for i, (a, b) in enumerate(zip(ts[:-1], ts[1:]), start=1):
        h = b - a
        if method == "expmid":
            G = assembly.at(a + 0.5 * h)
            if cache_key is None or h != cache_key[0] or not np.array_equal(G, cache_key[1]):
                cache_key, cache_U = (h, G), expm(h * G)
            c = cache_U @ c
        else:
            k1 = assembly.at(a) @ c
            Gm = assembly.at(a + 0.5 * h)
            k2 = Gm @ (c + 0.5 * h * k1)
            k3 = Gm @ (c + 0.5 * h * k2)
            k4 = assembly.at(b) @ (c + h * k3)
            c = c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(c)):
            raise IntegrationError(f"non-finite spectral coefficients at t={b:.6g}")
        state = x0.with_coeffs(c)
        leak = leakage(state)
        max_leak = max(max_leak, leak)
        if leakage_policy != "ignore":
            if leak > LEAKAGE_ERROR and leakage_policy == "raise":
                raise LeakageError(f"leakage {leak:.3g} into the outer shell at t={b:.6g} "
                                   f"exceeds {LEAKAGE_ERROR:g}; raise the cutoff")
            if leak > LEAKAGE_WARN and not warned:
                warnings.warn(f"leakage {leak:.3g} into the outer shell at t={b:.6g}",
                              LeakageWarning, stacklevel=2)
                warned = True
        if i % log_every == 0 or i == len(ts) - 1:
            rows.append(_log_row(b, state))
    return PropagationResult(state, np.array(rows), max_leak)


def propagator(assembly: GeneratorAssembly, t_end: float, dt: float, method: str = "expmid",
               t0: float = 0.0) -> OperatorMatrix:
    """Full evolution matrix U(t_end, t0) built with the same stepper as :func:`propagate`."""
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; expected one of {METHODS}")
    D = assembly.lattice.dim
    U = np.eye(D, dtype=complex)
    ts = step_times(t0, t_end, dt)
    for a, b in zip(ts[:-1], ts[1:]):
        h = b - a
        if method == "expmid":
            U = expm(h * assembly.at(a + 0.5 * h)) @ U
        else:
            Ga, Gm, Gb = assembly.at(a), assembly.at(a + 0.5 * h), assembly.at(b)
            k1 = Ga @ U
            k2 = Gm @ (U + 0.5 * h * k1)
            k3 = Gm @ (U + 0.5 * h * k2)
            k4 = Gb @ (U + h * k3)
            U = U + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return OperatorMatrix(assembly.lattice, U)


# ---------------------------------------------------------------------------
# Constant connections: Berry multiplier and product decomposition
# ---------------------------------------------------------------------------

def berry_multiplier(Lambda_const, delta_xi, lattice: ModeLattice, lam=None) -> OperatorMatrix:
    """Diagonal phases exp[-i n_j delta_xi^alpha Lambda^j_alpha].

    With a nonzero ``lam`` the mode label n_j is replaced by the action
    eigenvalue n_j - lambda_j, matching the generator's lambda term.
    """
    L = np.atleast_2d(np.asarray(Lambda_const, dtype=float))
    delta_xi = np.atleast_1d(np.asarray(delta_xi, dtype=float))
    if L.shape != (lattice.m, delta_xi.size):
        raise InputError(f"connection matrix {L.shape} does not match m={lattice.m}, "
                         f"d={delta_xi.size}")
    lam = np.asarray(validate_lambda((0.0,) * lattice.m if lam is None else lam, lattice.m))
    shift = L @ delta_xi
    phases = np.exp(-1j * ((lattice.modes - lam) @ shift))
    return OperatorMatrix(lattice, np.diag(phases))


def _constant_matrix(Lambda_const) -> np.ndarray:
    if isinstance(Lambda_const, ConnectionSpec):
        try:
            return Lambda_const.constant_matrix()
        except InputError as exc:
            raise InputError("product decomposition needs a constant connection "
                             "(commuting factors)") from exc
    return np.atleast_2d(np.asarray(Lambda_const, dtype=float))


def product_evolution(H: Polynomial, Lambda_const, path: ParameterPath, x0: SpectralState,
                      t_end: float, dt: float, method: str = "expmid"):
    """Combined evolution under -i H(I) + G_holonomy(t) versus the factored product.

    Returns ``(combined, factored)``: ``combined`` is stepped numerically,
    ``factored`` is the Berry multiplier applied after exp(-i t_end E_n).
    """
    L = _constant_matrix(Lambda_const)
    lattice = x0.lattice
    E = energies(lattice, x0.lam, H)
    spec = ConnectionSpec.constant(L)
    assembly = GeneratorAssembly(spec, path, lattice, x0.lam, static=np.diag(-1j * E))
    combined = propagate(assembly, x0, t_end, dt, method=method).state
    dynamic = x0.with_coeffs(np.exp(-1j * t_end * E) * x0.coeffs)
    berry = berry_multiplier(L, path_displacement(path, t_end), lattice, x0.lam)
    return combined, berry.apply(dynamic)


# ---------------------------------------------------------------------------
# Original <-> initial-data quantizations
# ---------------------------------------------------------------------------

def r_map(x: SpectralState, H: Polynomial, t: float, direction: str = "forward") -> SpectralState:
    """Mode n multiplied by exp(+i t E_n) (forward) or exp(-i t E_n) (inverse)."""
    if direction not in ("forward", "inverse"):
        raise InputError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    sign = 1.0 if direction == "forward" else -1.0
    E = energies(x.lattice, x.lam, H)
    return x.with_coeffs(np.exp(sign * 1j * t * E) * x.coeffs)


def conjugate_by_r(A: OperatorMatrix, H: Polynomial, t: float, lam=None) -> OperatorMatrix:
    """R^{-1} A R, i.e. entry (m, n) times exp(-i t (E_m - E_n))."""
    lam = (0.0,) * A.lattice.m if lam is None else lam
    E = energies(A.lattice, lam, H)
    phase = np.exp(-1j * t * (E[:, None] - E[None, :]))
    return OperatorMatrix(A.lattice, phase * A.entries)


# ---------------------------------------------------------------------------
# Characteristic (pullback) solution
# ---------------------------------------------------------------------------

def closed_form_evolve(spec: ConnectionSpec, path: ParameterPath, lam, psi0_grid, t: float,
                       dt: float, P: int | None = None) -> np.ndarray:
    """Pullback solution det(dPhi^{-1}/dphi)^{1/2} Psi0(Phi^{-1}(t, phi)) exp(i lambda.phi).

    ``psi0_grid`` holds the initial values on the uniform P^m grid, i.e. the
    periodic function sum_n c_n exp(i n.phi) of the initial spectral state. The
    half-form Psi0 is that function times exp(-i lambda.phi), continued to all
    of R^m with transition factors exp(-2 pi i lambda_k); it is evaluated at
    the unwrapped preimages by band-limited interpolation. The result is
    then single-valued on the torus and directly comparable with the
    spectral propagation.
    """
    psi0_grid = np.asarray(psi0_grid, dtype=complex)
    m = spec.m
    lam = np.asarray(validate_lambda(lam, m))
    P = psi0_grid.shape[0] if P is None else int(P)
    psi0_grid = psi0_grid.reshape((P,) * m)
    chi0 = from_grid(psi0_grid, grid_lattice(P, m))
    nodes = grid_points(P, m)
    pre, J = inverse_flow(spec, path, t, nodes, dt, normalize=False)
    det = np.linalg.det(J)
    if not np.all(det > 0):
        raise FlowFault(f"inverse-flow Jacobian determinant {det.min():.3g} <= 0")
    psi0_at_pre = evaluate(chi0, pre) * np.exp(-1j * (pre @ lam))
    out = np.sqrt(det) * psi0_at_pre * np.exp(1j * (nodes @ lam))
    return out.reshape((P,) * m)


def seam_mask(P: int, lam) -> np.ndarray:
    """Grid nodes kept in error norms: drop phi_k = 0 on axes with lambda_k != 0."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    m = lam.size
    idx = np.indices((P,) * m).reshape(m, -1).T
    keep = np.ones(idx.shape[0], dtype=bool)
    for k in range(m):
        if lam[k] != 0:
            keep &= idx[:, k] != 0
    return keep.reshape((P,) * m)


def grid_l2(a, b, lam=None) -> float:
    """RMS difference on the grid, the discrete normalized torus L2 norm."""
    a = np.asarray(a)
    b = np.asarray(b)
    diff = np.abs(a - b) ** 2
    if lam is not None:
        diff = diff[seam_mask(a.shape[0], lam)]
    return float(np.sqrt(np.mean(diff)))


def spectral_gradient(values: np.ndarray) -> np.ndarray:
    """d/dphi_k of periodic grid data via FFT; shape (m,) + values.shape."""
    m = values.ndim
    P = values.shape[0]
    freqs = np.fft.fftfreq(P, d=1.0 / P)
    if P % 2 == 0:
        freqs[P // 2] = 0.0  # Nyquist mode has no real-valued derivative
    F = np.fft.fftn(values)
    grads = []
    for k in range(m):
        shape = [1] * m
        shape[k] = P
        grads.append(np.fft.ifftn(1j * freqs.reshape(shape) * F))
    return np.array(grads)


def pde_residual(spec: ConnectionSpec, path: ParameterPath, lam, psi0_grid, t: float,
                 dt: float, P: int | None = None) -> float:
    """Grid L2 residual of the closed-form solution in the driven Schrodinger equation.

    Time derivative: forward difference over [t, t + dt] (backward if t + dt
    leaves the path domain); spatial terms evaluated at the midpoint from the
    averaged field with analytic connection coefficients.
    """
    lam_v = np.asarray(validate_lambda(lam, spec.m))
    t_b = t + dt if t + dt <= path.duration else t - dt
    a = closed_form_evolve(spec, path, lam, psi0_grid, t, dt, P)
    b = closed_form_evolve(spec, path, lam, psi0_grid, t_b, dt, P)
    t_mid = 0.5 * (t + t_b)
    sigma, v = path_eval(path, t_mid), path_deriv(path, t_mid)
    psi = 0.5 * (a + b)
    P = psi.shape[0]
    m = spec.m
    nodes = grid_points(P, m)
    L = eval_connection(spec, sigma, nodes) @ v                     # (B, k)
    divL = np.einsum("bkk->b", eval_connection_dphi(spec, sigma, nodes) @ v)
    grad = spectral_gradient(psi).reshape(m, -1).T                  # (B, k)
    flat = psi.ravel()
    spatial = np.sum(L * grad, axis=1) + 0.5 * divL * flat - 1j * (L @ lam_v) * flat
    resid = (b - a).ravel() / (t_b - t) + spatial
    return float(np.sqrt(np.mean(np.abs(resid) ** 2)))
