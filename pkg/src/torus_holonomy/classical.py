"""Classical holonomy flow on the action-angle domain V x T^m.

With the initial-data Hamiltonian H_xi = I_k Lambda^k_alpha(xi, phi) dxi^alpha/dt
Hamilton's equations are

    dphi^i/dt = Lambda^i_alpha(xi(t), phi) dxi^alpha/dt
    dI_i/dt   = -I_k d_i Lambda^k_alpha(xi(t), phi) dxi^alpha/dt

The angle equation does not involve I and the action equation is linear in I.
Everything here uses a fixed-step classical RK4; angles are integrated
unwrapped and folded into [0, 2pi) only in returned states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import FlowFault, InputError, IntegrationError
from .geometry import (
    ConnectionSpec,
    ParameterPath,
    Polynomial,
    check_dims,
    eval_connection,
    eval_connection_dphi,
    normalize_angles,
    path_deriv,
    path_eval,
)


class HamiltonianPoly(Polynomial):
    """Polynomial Hamiltonian H(I_1, ..., I_m) of the unperturbed system."""

    @classmethod
    def zero(cls, m: int) -> "HamiltonianPoly":
        return cls(m, ())

    @classmethod
    def kinetic(cls, m: int, scale: float = 0.5) -> "HamiltonianPoly":
        """scale * sum_k I_k^2."""
        terms = []
        for k in range(m):
            powers = [0] * m
            powers[k] = 2
            terms.append((scale, tuple(powers)))
        return cls(m, tuple(terms))

    @classmethod
    def from_polynomial(cls, poly: Polynomial) -> "HamiltonianPoly":
        return cls(poly.nvars, poly.terms)


@dataclass(frozen=True)
class ClassicalState:
    t: float
    I: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        I = np.atleast_1d(np.asarray(self.I, dtype=float))
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if I.shape != phi.shape or I.ndim != 1:
            raise InputError(f"actions {I.shape} and angles {phi.shape} must be matching vectors")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "I", I)
        object.__setattr__(self, "phi", normalize_angles(phi))

    @property
    def m(self) -> int:
        return self.I.size


@dataclass(frozen=True)
class Trajectory:
    """Sampled flow: one row per accepted step, including the initial point."""

    t: np.ndarray
    I: np.ndarray
    phi_unwrapped: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return normalize_angles(self.phi_unwrapped)

    @property
    def final(self) -> ClassicalState:
        return ClassicalState(self.t[-1], self.I[-1], self.phi_unwrapped[-1])

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i) -> ClassicalState:
        return ClassicalState(self.t[i], self.I[i], self.phi_unwrapped[i])

    def rows(self) -> np.ndarray:
        """Table ``t, I_1..I_m, phi_1..phi_m`` with normalized angles."""
        return np.column_stack([self.t, self.I, self.phi])


# ---------------------------------------------------------------------------
# Fixed-step RK4
# ---------------------------------------------------------------------------

def step_times(t0: float, t_end: float, dt: float) -> np.ndarray:
    """Grid t0, t0 +- dt, ... landing exactly on t_end (last step shortened)."""
    if not dt > 0:
        raise InputError(f"step must be positive, got dt={dt}")
    span = t_end - t0
    n_full = int(math.floor(abs(span) / dt + 1e-9))
    direction = 1.0 if span >= 0 else -1.0
    ts = t0 + direction * dt * np.arange(n_full + 1)
    if abs(t_end - ts[-1]) > 1e-12 * max(1.0, abs(span)):
        ts = np.append(ts, t_end)
    else:
        ts[-1] = t_end
    return ts


def rk4(rhs: Callable, y0, t0: float, t_end: float, dt: float, record: bool = True):
    """Classical fourth-order Runge-Kutta with fixed step ``dt``.

    Integrates forward or backward depending on the sign of ``t_end - t0``.
    Returns ``(times, states)``; ``states`` holds only the endpoint unless
    ``record`` is set.
    """
    ts = step_times(t0, t_end, dt)
    y = np.array(y0, dtype=float)
    out = [y.copy()] if record else None
    for a, b in zip(ts[:-1], ts[1:]):
        h = b - a
        k1 = rhs(a, y)
        k2 = rhs(a + 0.5 * h, y + (0.5 * h) * k1)
        k3 = rhs(a + 0.5 * h, y + (0.5 * h) * k2)
        k4 = rhs(b, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={b:.6g}: {y.ravel()[:8]}")
        if record:
            out.append(y.copy())
    if record:
        return ts, np.array(out)
    return ts, y


# ---------------------------------------------------------------------------
# Hamilton equations
# ---------------------------------------------------------------------------

def _drive(path: ParameterPath, t: float):
    return path_eval(path, t), path_deriv(path, t)


def angle_velocity(spec: ConnectionSpec, sigma, velocity, phi) -> np.ndarray:
    """Lambda^i_alpha(sigma, phi) velocity^alpha, batched over phi."""
    return eval_connection(spec, sigma, phi) @ velocity


def angle_velocity_jacobian(spec: ConnectionSpec, sigma, velocity, phi) -> np.ndarray:
    """Matrix A[i, k] = d_k Lambda^i_alpha velocity^alpha, batched over phi."""
    D = eval_connection_dphi(spec, sigma, phi)
    return np.swapaxes(D @ velocity, -1, -2)


def action_velocity(spec: ConnectionSpec, sigma, velocity, phi, I) -> np.ndarray:
    """-I_k d_i Lambda^k_alpha velocity^alpha."""
    D = eval_connection_dphi(spec, sigma, phi)  # [..., i, k, alpha]
    return -np.einsum("...k,...ik->...i", I, D @ velocity)


def hamilton_rhs(spec: ConnectionSpec, path: ParameterPath, state: ClassicalState):
    """Right-hand side ``(dphi/dt, dI/dt)`` of the holonomy flow at ``state``."""
    check_dims(spec, path)
    if state.m != spec.m:
        raise InputError(f"state has {state.m} angles, connection expects {spec.m}")
    sigma, v = _drive(path, state.t)
    return (angle_velocity(spec, sigma, v, state.phi),
            action_velocity(spec, sigma, v, state.phi, state.I))


def _check_run(spec: ConnectionSpec, path: ParameterPath, m: int, t0: float, t_end: float):
    check_dims(spec, path)
    if m != spec.m:
        raise InputError(f"state has {m} angles, connection expects {spec.m}")
    for t in (t0, t_end):
        if not -1e-12 <= t <= path.duration * (1 + 1e-12):
            raise InputError(f"time {t} outside path domain [0, {path.duration}]")


def integrate_flow(spec: ConnectionSpec, path: ParameterPath, state0: ClassicalState,
                   t_end: float, dt: float) -> Trajectory:
    """RK4 trajectory of the holonomy flow from ``state0`` to ``t_end``."""
    m = spec.m
    _check_run(spec, path, state0.m, state0.t, t_end)
    ts, ys = rk4(_flow_rhs(spec, path, m), np.concatenate([state0.phi, state0.I]),
                 state0.t, t_end, dt)
    return Trajectory(ts, ys[:, m:], ys[:, :m])


def _flow_rhs(spec, path, m):
    def rhs(t, y):
        sigma, v = _drive(path, t)
        phi, I = y[:m], y[m:]
        return np.concatenate([angle_velocity(spec, sigma, v, phi),
                               action_velocity(spec, sigma, v, phi, I)])
    return rhs


def _variational_rhs(spec, path, m, with_actions):
    def rhs(t, y):
        sigma, v = _drive(path, t)
        phi = y[..., :m]
        J = y[..., -m * m:].reshape(y.shape[:-1] + (m, m))
        dJ = angle_velocity_jacobian(spec, sigma, v, phi) @ J
        parts = [angle_velocity(spec, sigma, v, phi)]
        if with_actions:
            parts.append(action_velocity(spec, sigma, v, phi, y[..., m:2 * m]))
        parts.append(dJ.reshape(y.shape[:-1] + (m * m,)))
        return np.concatenate(parts, axis=-1)
    return rhs


def variational_trajectory(spec: ConnectionSpec, path: ParameterPath, state0: ClassicalState,
                           t_end: float, dt: float):
    """Trajectory together with the angle Jacobians J(t) = dphi(t)/dphi(0)."""
    m = spec.m
    _check_run(spec, path, state0.m, state0.t, t_end)
    y0 = np.concatenate([state0.phi, state0.I, np.eye(m).ravel()])
    ts, ys = rk4(_variational_rhs(spec, path, m, True), y0, state0.t, t_end, dt)
    traj = Trajectory(ts, ys[:, m:2 * m], ys[:, :m])
    return traj, ys[:, 2 * m:].reshape(-1, m, m)


def variational_flow(spec: ConnectionSpec, path: ParameterPath, state0: ClassicalState,
                     t_end: float, dt: float):
    """Endpoint state and transport Jacobian dphi(t_end)/dphi(0).

    The Jacobian solves dJ/dt = A(t) J, A[i, k] = d_k Lambda^i_alpha dxi^alpha/dt,
    from J(0) = identity.
    """
    traj, Js = variational_trajectory(spec, path, state0, t_end, dt)
    J = Js[-1]
    if not np.linalg.det(J) > 0:
        raise FlowFault(f"transport Jacobian determinant {np.linalg.det(J):.3g} <= 0")
    return traj.final, J


def inverse_flow(spec: ConnectionSpec, path: ParameterPath, t: float, phi, dt: float,
                 normalize: bool = True):
    """Inverse angle flow Phi^{-1}(t, phi) and its Jacobian d(Phi^{-1})^i/dphi^k.

    Integrates the angle equation backward from final condition ``phi`` at
    time ``t`` to time 0 with the variational system attached. ``phi`` may be
    a batch of shape (B, m); the Jacobians then have shape (B, m, m).
    With ``normalize=False`` the preimage angles are returned unwrapped.
    """
    m = spec.m
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1:] != (m,):
        raise InputError(f"angles have shape {phi.shape}, expected (..., {m})")
    _check_run(spec, path, m, 0.0, t)
    batch = phi.shape[:-1]
    eye = np.broadcast_to(np.eye(m).ravel(), batch + (m * m,))
    y0 = np.concatenate([phi, eye], axis=-1)
    _, y = rk4(_variational_rhs(spec, path, m, False), y0, t, 0.0, dt, record=False)
    pre = y[..., :m]
    J = y[..., m:].reshape(batch + (m, m))
    return (normalize_angles(pre) if normalize else pre), J


# ---------------------------------------------------------------------------
# Initial-data <-> original action-angle coordinates
# ---------------------------------------------------------------------------

def canonical_to_original(H: Polynomial, state: ClassicalState) -> ClassicalState:
    """varphi^i = phi^i + t dH/dI_i(I); actions unchanged."""
    return ClassicalState(state.t, state.I, state.phi + state.t * H.grad(state.I))


def original_to_canonical(H: Polynomial, state: ClassicalState) -> ClassicalState:
    """Inverse of :func:`canonical_to_original`."""
    return ClassicalState(state.t, state.I, state.phi - state.t * H.grad(state.I))


def original_frame_flow(spec: ConnectionSpec, path: ParameterPath, H: Polynomial,
                        state0: ClassicalState, t_end: float, dt: float) -> Trajectory:
    """Perturbed flow written directly in the original action-angle coordinates.

    The perturbing Hamiltonian is I_k Lambda^k_alpha(xi, varphi - t dH) dxi^alpha/dt
    + H(I); its Hamilton equations carry the explicit t-dependent Hessian term.
    ``state0`` is given in original coordinates.
    """
    m = spec.m
    _check_run(spec, path, state0.m, state0.t, t_end)
    if H.nvars != m:
        raise InputError(f"Hamiltonian has {H.nvars} variables, expected {m}")

    def rhs(t, y):
        sigma, v = _drive(path, t)
        varphi, I = y[:m], y[m:]
        shifted = varphi - t * H.grad(I)
        dI = action_velocity(spec, sigma, v, shifted, I)
        dvarphi = H.grad(I) + angle_velocity(spec, sigma, v, shifted) + t * (H.hessian(I) @ dI)
        return np.concatenate([dvarphi, dI])

    ts, ys = rk4(rhs, np.concatenate([state0.phi, state0.I]), state0.t, t_end, dt)
    return Trajectory(ts, ys[:, m:], ys[:, :m])


def flow_map(spec: ConnectionSpec, path: ParameterPath, I0, phi0, t_end: float,
             dt: float) -> np.ndarray:
    """Endpoint (phi, I) of the holonomy flow from time 0, angles unwrapped."""
    m = spec.m
    _check_run(spec, path, np.atleast_1d(phi0).size, 0.0, t_end)
    _, y = rk4(_flow_rhs(spec, path, m), np.concatenate([np.atleast_1d(phi0), np.atleast_1d(I0)]).astype(float),
               0.0, t_end, dt, record=False)
    return y


def symplectic_defect(spec: ConnectionSpec, path: ParameterPath, I0, phi0, t_end: float,
                      dt: float, eps: float = 1e-5) -> float:
    """max |S^T Omega S - Omega| with S the central-difference flow Jacobian.

    Coordinates are ordered (phi, I), Omega = [[0, 1], [-1, 0]].
    """
    m = spec.m
    z0 = np.concatenate([np.atleast_1d(phi0), np.atleast_1d(I0)]).astype(float)
    S = np.empty((2 * m, 2 * m))
    for j in range(2 * m):
        e = np.zeros(2 * m)
        e[j] = eps
        plus = flow_map(spec, path, (z0 + e)[m:], (z0 + e)[:m], t_end, dt)
        minus = flow_map(spec, path, (z0 - e)[m:], (z0 - e)[:m], t_end, dt)
        S[:, j] = (plus - minus) / (2 * eps)
    omega = np.block([[np.zeros((m, m)), np.eye(m)], [-np.eye(m), np.zeros((m, m))]])
    return float(np.max(np.abs(S.T @ omega @ S - omega)))
