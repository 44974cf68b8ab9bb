"""Connections on the trivial torus bundle, parameter paths and torus utilities.

A connection is stored as a finite list of terms

    Lambda^k_alpha(sigma, phi) += amplitude(sigma) * {1, cos(n.phi), sin(n.phi)}

with polynomial amplitudes. That family is closed under phi-differentiation,
which is what the classical variational equations and the Fourier matrix
elements of the quantum generator need.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import InputError

TWO_PI = 2.0 * math.pi

KINDS = ("constant", "cos", "sin")


def normalize_angles(phi) -> np.ndarray:
    """Canonical representative of each angle in [0, 2pi)."""
    out = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    # np.mod can return exactly 2pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def angle_difference(a, b) -> np.ndarray:
    """Signed difference a - b folded into [-pi, pi)."""
    return np.mod(np.asarray(a) - np.asarray(b) + math.pi, TWO_PI) - math.pi


# ---------------------------------------------------------------------------
# Polynomials and trigonometric polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Polynomial:
    """Real multivariate polynomial sum_j c_j prod_i x_i**p_ji.

    ``terms`` is a tuple of ``(coefficient, powers)`` pairs; ``nvars`` fixes
    the number of variables even when every power is zero.
    """

    nvars: int
    terms: tuple = ()

    def __post_init__(self):
        clean = []
        for c, powers in self.terms:
            powers = tuple(int(p) for p in powers)
            if len(powers) != self.nvars:
                raise InputError(
                    f"monomial powers {powers} do not match {self.nvars} variables")
            if any(p < 0 for p in powers):
                raise InputError(f"negative power in monomial {powers}")
            clean.append((float(c), powers))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def constant(cls, value: float, nvars: int) -> "Polynomial":
        return cls(nvars, ((value, (0,) * nvars),))

    @property
    def degree(self) -> int:
        return max((sum(p) for _, p in self.terms), default=0)

    @property
    def is_constant(self) -> bool:
        return all(sum(p) == 0 for _, p in self.terms)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.nvars,):
            raise InputError(
                f"polynomial in {self.nvars} variables evaluated at shape {x.shape}")
        return x

    def __call__(self, x):
        x = self._check(x)
        out = np.zeros(x.shape[:-1])
        for c, powers in self.terms:
            out = out + c * _monomial(x, powers)
        return out if out.ndim else float(out)

    def grad(self, x) -> np.ndarray:
        """Exact gradient, shape ``x.shape``."""
        x = self._check(x)
        out = np.zeros(x.shape)
        for c, powers in self.terms:
            for i, p in enumerate(powers):
                if p == 0:
                    continue
                lowered = list(powers)
                lowered[i] -= 1
                out[..., i] += c * p * _monomial(x, lowered)
        return out

    def hessian(self, x) -> np.ndarray:
        """Exact Hessian, shape ``x.shape + (nvars,)``."""
        x = self._check(x)
        out = np.zeros(x.shape + (self.nvars,))
        for c, powers in self.terms:
            for i in range(self.nvars):
                for j in range(self.nvars):
                    lowered = list(powers)
                    factor = lowered[i]
                    lowered[i] -= 1
                    factor *= lowered[j]
                    lowered[j] -= 1
                    if factor == 0:
                        continue
                    out[..., i, j] += c * factor * _monomial(x, lowered)
        return out


def _monomial(x: np.ndarray, powers) -> np.ndarray:
    val = np.ones(x.shape[:-1])
    for i, p in enumerate(powers):
        if p:
            val = val * x[..., i] ** p
    return val


@dataclass(frozen=True)
class TrigPoly:
    """Real trigonometric polynomial in m angles.

    Terms are ``(coefficient, harmonic, kind)`` with kind in
    ``{"constant", "cos", "sin"}``.
    """

    m: int
    terms: tuple = ()

    def __post_init__(self):
        clean = []
        for c, n, kind in self.terms:
            n = tuple(int(v) for v in n)
            if len(n) != self.m:
                raise InputError(f"harmonic {n} does not match torus dimension {self.m}")
            if kind not in KINDS:
                raise InputError(f"unknown term kind {kind!r}")
            clean.append((float(c), n, kind))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def constant(cls, value: float, m: int) -> "TrigPoly":
        return cls(m, ((value, (0,) * m, "constant"),))

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(phi.shape[:-1])
        for c, n, kind in self.terms:
            out = out + c * _trig_factor(phi, n, kind)
        return out if out.ndim else float(out)

    def fourier(self) -> dict:
        """Complex Fourier coefficients ``{harmonic: c}`` with c_{-p} = conj(c_p)."""
        return fourier_coefficients(self.terms, self.m)

    @property
    def max_harmonic(self) -> int:
        return max((max(abs(v) for v in n) for c, n, k in self.terms if k != "constant"),
                   default=0)


def _trig_factor(phi: np.ndarray, n, kind: str):
    if kind == "constant":
        return np.ones(phi.shape[:-1])
    arg = phi @ np.asarray(n, dtype=float)
    return np.cos(arg) if kind == "cos" else np.sin(arg)


def fourier_coefficients(terms, m: int) -> dict:
    """Expand ``(coef, harmonic, kind)`` terms into exp(i p.phi) coefficients."""
    out: dict = {}

    def add(p, c):
        out[p] = out.get(p, 0.0) + c

    zero = (0,) * m
    for c, n, kind in terms:
        n = tuple(n)
        neg = tuple(-v for v in n)
        if kind == "constant" or (n == zero and kind == "cos"):
            add(zero, complex(c))
        elif n == zero:
            continue  # sin(0) vanishes
        elif kind == "cos":
            add(n, c / 2)
            add(neg, c / 2)
        else:
            add(n, c / 2j)
            add(neg, -c / 2j)
    return {p: v for p, v in out.items() if v != 0}


# ---------------------------------------------------------------------------
# Connection coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectionTerm:
    """One contribution amplitude(sigma) * f(n.phi) to Lambda^k_alpha.

    ``k`` and ``alpha`` are zero-based.
    """

    k: int
    alpha: int
    amplitude: Polynomial
    harmonic: tuple
    kind: str = "constant"


@dataclass(frozen=True)
class ConnectionSpec:
    """Coefficients Lambda^k_alpha(sigma, phi) of a connection on Sigma x T^m."""

    m: int
    d: int
    terms: tuple = ()

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise InputError(f"need m >= 1 and d >= 1, got m={self.m}, d={self.d}")
        clean = []
        for t in self.terms:
            if not 0 <= t.k < self.m:
                raise InputError(f"term angle index {t.k} outside 0..{self.m - 1}")
            if not 0 <= t.alpha < self.d:
                raise InputError(f"term parameter index {t.alpha} outside 0..{self.d - 1}")
            if t.amplitude.nvars != self.d:
                raise InputError("amplitude polynomial must be in d parameter variables")
            harmonic = tuple(int(v) for v in t.harmonic)
            if len(harmonic) != self.m:
                raise InputError(f"harmonic {harmonic} does not match m={self.m}")
            if t.kind not in KINDS:
                raise InputError(f"unknown term kind {t.kind!r}")
            kind = t.kind
            if not any(harmonic):
                if kind == "sin":
                    continue
                kind = "constant"
            if kind == "constant":
                harmonic = (0,) * self.m
            clean.append(ConnectionTerm(t.k, t.alpha, t.amplitude, harmonic, kind))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def constant(cls, values) -> "ConnectionSpec":
        """Principal connection with constant coefficient matrix (m x d)."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        m, d = values.shape
        terms = [ConnectionTerm(k, a, Polynomial.constant(values[k, a], d), (0,) * m)
                 for k in range(m) for a in range(d) if values[k, a] != 0.0]
        return cls(m, d, tuple(terms))

    @property
    def is_constant(self) -> bool:
        """True when every term is phi-independent (principal in phi)."""
        return all(t.kind == "constant" for t in self.terms)

    @property
    def max_harmonic(self) -> int:
        return max((max(abs(v) for v in t.harmonic) for t in self.terms), default=0)

    def constant_matrix(self) -> np.ndarray:
        """Coefficient matrix of a constant connection with sigma-free amplitudes."""
        if not self.is_constant or not all(t.amplitude.is_constant for t in self.terms):
            raise InputError("connection coefficients are not constant")
        return eval_connection(self, np.zeros(self.d), np.zeros(self.m))

    def coefficient(self, sigma, k: int, alpha: int) -> TrigPoly:
        """Lambda^k_alpha(sigma, .) as a trigonometric polynomial in phi."""
        sigma = _as_point(sigma, self.d)
        return TrigPoly(self.m, tuple(
            (t.amplitude(sigma), t.harmonic, t.kind)
            for t in self.terms if t.k == k and t.alpha == alpha))


def _as_point(sigma, d: int) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (d,):
        raise InputError(f"parameter point has shape {sigma.shape}, expected ({d},)")
    return sigma


def _as_angles(phi, m: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1:] != (m,):
        raise InputError(f"angles have shape {phi.shape}, expected (..., {m})")
    return phi


def eval_connection(spec: ConnectionSpec, sigma, phi) -> np.ndarray:
    """Lambda^k_alpha(sigma, phi) as an (..., m, d) array.

    ``phi`` may carry leading batch dimensions; ``sigma`` is a single point.
    """
    sigma = _as_point(sigma, spec.d)
    phi = _as_angles(phi, spec.m)
    out = np.zeros(phi.shape[:-1] + (spec.m, spec.d))
    for t in spec.terms:
        amp = t.amplitude(sigma)
        out[..., t.k, t.alpha] += amp * _trig_factor(phi, t.harmonic, t.kind)
    return out


def eval_connection_dphi(spec: ConnectionSpec, sigma, phi) -> np.ndarray:
    """Exact angle derivatives d_i Lambda^k_alpha as an (..., m, m, d) array.

    Index order is ``[..., i, k, alpha]``. Constant terms contribute nothing,
    so a constant spec returns an all-zero array without arithmetic.
    """
    sigma = _as_point(sigma, spec.d)
    phi = _as_angles(phi, spec.m)
    out = np.zeros(phi.shape[:-1] + (spec.m, spec.m, spec.d))
    for t in spec.terms:
        if t.kind == "constant":
            continue
        amp = t.amplitude(sigma)
        arg = phi @ np.asarray(t.harmonic, dtype=float)
        # cos -> -n sin, sin -> n cos
        deriv = -np.sin(arg) if t.kind == "cos" else np.cos(arg)
        for i, n_i in enumerate(t.harmonic):
            if n_i:
                out[..., i, t.k, t.alpha] += amp * n_i * deriv
    return out


# ---------------------------------------------------------------------------
# Parameter paths
# ---------------------------------------------------------------------------

def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Line:
    start: np.ndarray
    end: np.ndarray
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "start", _vec(self.start))
        object.__setattr__(self, "end", _vec(self.end))
        if self.start.shape != self.end.shape:
            raise InputError("line endpoints differ in dimension")

    def point(self, u: float) -> np.ndarray:
        s = u / self.duration
        return (1.0 - s) * self.start + s * self.end

    def velocity(self, u: float) -> np.ndarray:
        return (self.end - self.start) / self.duration


@dataclass(frozen=True)
class Arc:
    """Circular arc in the (axes[0], axes[1]) coordinate plane (zero-based)."""

    center: np.ndarray
    radius: float
    axes: tuple
    start_angle: float
    sweep: float
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        a1, a2 = (int(a) for a in self.axes)
        d = self.center.size
        if not (0 <= a1 < d and 0 <= a2 < d) or a1 == a2:
            raise InputError(f"arc axes {self.axes} invalid for parameter dimension {d}")
        object.__setattr__(self, "axes", (a1, a2))

    @property
    def start(self) -> np.ndarray:
        return self.point(0.0)

    @property
    def end(self) -> np.ndarray:
        return self.point(self.duration)

    def _angle(self, u: float) -> float:
        return self.start_angle + self.sweep * (u / self.duration)

    def point(self, u: float) -> np.ndarray:
        theta = self._angle(u)
        p = self.center.copy()
        p[self.axes[0]] += self.radius * math.cos(theta)
        p[self.axes[1]] += self.radius * math.sin(theta)
        return p

    def velocity(self, u: float) -> np.ndarray:
        theta = self._angle(u)
        w = self.sweep / self.duration
        v = np.zeros_like(self.center)
        v[self.axes[0]] = -self.radius * w * math.sin(theta)
        v[self.axes[1]] = self.radius * w * math.cos(theta)
        return v


@dataclass(frozen=True)
class SmoothstepLine:
    """Straight segment traversed with a polynomial ramp of integer ``steepness``.

    ``steepness`` is the smoothstep order: 1 gives 3s^2 - 2s^3, 2 the quintic.
    Larger orders approach a step drive while keeping the velocity bounded.
    """

    start: np.ndarray
    end: np.ndarray
    duration: float
    steepness: int = 2

    def __post_init__(self):
        object.__setattr__(self, "start", _vec(self.start))
        object.__setattr__(self, "end", _vec(self.end))
        if self.start.shape != self.end.shape:
            raise InputError("smoothstep endpoints differ in dimension")
        if int(self.steepness) != self.steepness or self.steepness < 1:
            raise InputError(f"steepness must be a positive integer, got {self.steepness}")
        object.__setattr__(self, "steepness", int(self.steepness))

    def ramp(self, s: float) -> float:
        if s <= 0.0:
            return 0.0
        if s >= 1.0:
            return 1.0
        # S_n is the regularized incomplete beta I_s(n + 1, n + 1)
        a = self.steepness + 1
        return float(special.betainc(a, a, s))

    def ramp_slope(self, s: float) -> float:
        if not 0.0 < s < 1.0:
            return 0.0
        a = self.steepness + 1
        return float((s * (1.0 - s)) ** self.steepness / special.beta(a, a))

    def point(self, u: float) -> np.ndarray:
        s = self.ramp(u / self.duration)
        return (1.0 - s) * self.start + s * self.end

    def velocity(self, u: float) -> np.ndarray:
        return (self.end - self.start) * (self.ramp_slope(u / self.duration) / self.duration)


@dataclass(frozen=True)
class PowerWarp:
    """Monotone time change s(t) = T (t/T)^p applied to a whole path."""

    exponent: float

    def __post_init__(self):
        if not self.exponent >= 1.0:
            raise InputError(f"time warp exponent must be >= 1, got {self.exponent}")

    def __call__(self, t: float, T: float) -> float:
        return T * (t / T) ** self.exponent

    def rate(self, t: float, T: float) -> float:
        return self.exponent * (t / T) ** (self.exponent - 1.0)


Segment = Line | Arc | SmoothstepLine


@dataclass(frozen=True)
class ParameterPath:
    """Piecewise-C1 curve xi(t) in parameter space, t in [0, duration]."""

    segments: tuple
    warp: PowerWarp | None = None
    joint_tol: float = 1e-9
    _bounds: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise InputError("a path needs at least one segment")
        d = segs[0].start.size
        bounds = [0.0]
        for i, seg in enumerate(segs):
            if not seg.duration > 0:
                raise InputError(f"segment {i} has non-positive duration {seg.duration}")
            if seg.start.size != d:
                raise InputError(f"segment {i} has dimension {seg.start.size}, expected {d}")
            if i:
                gap = float(np.max(np.abs(segs[i - 1].end - seg.start)))
                if gap > self.joint_tol:
                    raise InputError(f"path is discontinuous between segments {i - 1} and {i} "
                                     f"(jump {gap:.3g})")
            bounds.append(bounds[-1] + float(seg.duration))
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_bounds", tuple(bounds))

    @property
    def dim(self) -> int:
        return self.segments[0].start.size

    @property
    def duration(self) -> float:
        return self._bounds[-1]

    @property
    def breakpoints(self) -> tuple:
        return self._bounds

    def reparametrized(self, exponent: float) -> "ParameterPath":
        """Same image curve traversed with the time change t -> T (t/T)^exponent."""
        return ParameterPath(self.segments, PowerWarp(exponent), self.joint_tol)

    def _locate(self, t: float) -> tuple[int, float]:
        T = self.duration
        slack = 1e-12 * max(1.0, T)
        if not (-slack <= t <= T + slack):
            raise InputError(f"time {t} outside path domain [0, {T}]")
        t = min(max(t, 0.0), T)
        # right-sided at breakpoints, last segment at t = T
        i = min(bisect.bisect_right(self._bounds, t) - 1, len(self.segments) - 1)
        return i, t - self._bounds[i]

    def _warped(self, t: float) -> tuple[float, float]:
        if self.warp is None:
            return t, 1.0
        T = self.duration
        t = min(max(t, 0.0), T)
        return self.warp(t, T), self.warp.rate(t, T)

    def __call__(self, t: float) -> np.ndarray:
        return path_eval(self, t)


def path_eval(path: ParameterPath, t: float) -> np.ndarray:
    """Parameter point xi(t)."""
    s, _ = path._warped(float(t)) if 0 <= t <= path.duration else (float(t), 1.0)
    i, u = path._locate(s)
    return path.segments[i].point(u)


def path_deriv(path: ParameterPath, t: float) -> np.ndarray:
    """Velocity d xi / dt, right-sided at breakpoints and left-sided at t = T."""
    s, rate = path._warped(float(t)) if 0 <= t <= path.duration else (float(t), 1.0)
    i, u = path._locate(s)
    return path.segments[i].velocity(u) * rate


def path_displacement(path: ParameterPath, t: float | None = None) -> np.ndarray:
    """xi(t) - xi(0); ``t`` defaults to the path duration."""
    t = path.duration if t is None else t
    return path_eval(path, t) - path_eval(path, 0.0)


def velocity_bound(path: ParameterPath, samples: int = 2001) -> float:
    """Sampled max |d xi/dt| (infinity norm) over the path."""
    ts = np.linspace(0.0, path.duration, samples)
    return max(float(np.max(np.abs(path_deriv(path, t)))) for t in ts)


def check_dims(spec: ConnectionSpec, path: ParameterPath) -> None:
    if path.dim != spec.d:
        raise InputError(f"path dimension {path.dim} != connection parameter dimension {spec.d}")


def as_int_tuple(values: Sequence[int], m: int, name: str) -> tuple:
    values = tuple(int(v) for v in np.atleast_1d(values))
    if len(values) == 1 and m > 1:
        values = values * m
    if len(values) != m:
        raise InputError(f"{name} has {len(values)} entries, expected {m}")
    return values
