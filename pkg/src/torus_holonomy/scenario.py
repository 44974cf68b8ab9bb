"""Scenario files: one JSON document describing a full run.

Indices inside the file (``k``, ``alpha``, arc ``axes``) are one-based, as in
the usual tensor notation; the Python API is zero-based.

Example::

    {
      "name": "cos_smoothstep",
      "m": 1, "d": 1,
      "connection": [{"k": 1, "alpha": 1, "amplitude": 0.3,
                      "harmonic": [1], "kind": "cos"}],
      "path": {"segments": [{"type": "smoothstep-line", "start": [0], "end": [1],
                             "duration": 1.0, "steepness": 2}]},
      "lambda": [0],
      "hamiltonian": [[0.5, [2]]],
      "cutoff": [24], "dt": 0.001, "method": "expmid", "grid": 128,
      "initial": {"classical": {"I": [1.0], "phi": [0.0]},
                  "spectral": {"modes": [[[0], [1.0, 0.0]]], "normalize": true}}
    }

``amplitude`` is either a number or a list of ``[coefficient, powers]``
monomials in sigma; ``hamiltonian`` uses the same monomial form in I.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .classical import ClassicalState, HamiltonianPoly
from .errors import InputError
from .evolution import METHODS
from .geometry import (
    Arc,
    ConnectionSpec,
    ConnectionTerm,
    Line,
    ParameterPath,
    Polynomial,
    PowerWarp,
    SmoothstepLine,
)
from .qtorus import ModeLattice, SpectralState, from_grid, validate_lambda


class ScenarioError(InputError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"scenario field '{field_name}': {message}")
        self.field = field_name


@dataclass(frozen=True)
class Scenario:
    name: str
    connection: ConnectionSpec
    path: ParameterPath
    lam: tuple
    hamiltonian: HamiltonianPoly
    cutoff: tuple
    dt: float = 1e-3
    method: str = "expmid"
    grid: int = 128
    t_end: float | None = None
    initial_classical: ClassicalState | None = None
    initial_modes: dict | None = None
    normalize_initial: bool = True
    initial_grid: np.ndarray | None = field(default=None, compare=False)
    outputs: str | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def m(self) -> int:
        return self.connection.m

    @property
    def d(self) -> int:
        return self.connection.d

    @property
    def end_time(self) -> float:
        return self.path.duration if self.t_end is None else self.t_end

    @property
    def lattice(self) -> ModeLattice:
        return ModeLattice(self.cutoff)

    def spectral_state(self) -> SpectralState:
        """Initial quantum state on the scenario lattice."""
        if self.initial_modes is not None:
            return SpectralState.from_modes(self.lattice, self.initial_modes, self.lam,
                                            normalize=self.normalize_initial)
        if self.initial_grid is not None:
            state = from_grid(self.initial_grid, self.lattice, self.lam)
            return state.normalized() if self.normalize_initial else state
        raise InputError(f"scenario {self.name!r} has no spectral or grid initial state")

    def classical_state(self) -> ClassicalState:
        if self.initial_classical is None:
            raise InputError(f"scenario {self.name!r} has no classical initial state")
        return self.initial_classical

    def with_overrides(self, dt=None, cutoff=None, method=None, grid=None) -> "Scenario":
        changes = {}
        if dt is not None:
            if not dt > 0:
                raise ScenarioError("dt", f"must be positive, got {dt}")
            changes["dt"] = float(dt)
        if cutoff is not None:
            cutoff = _int_list(cutoff, self.m, "cutoff")
            changes["cutoff"] = cutoff
        if method is not None:
            if method not in METHODS:
                raise ScenarioError("method", f"must be one of {METHODS}, got {method!r}")
            changes["method"] = method
        if grid is not None:
            changes["grid"] = int(grid)
        out = replace(self, **changes)
        _validate_bands(out)
        return out


def _int_list(value, m: int, name: str) -> tuple:
    vals = np.atleast_1d(value)
    try:
        ints = tuple(int(v) for v in vals)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(name, f"expected integers, got {value!r}") from exc
    if len(ints) == 1 and m > 1:
        ints = ints * m
    if len(ints) != m or any(i != float(v) for i, v in zip(ints, vals)):
        raise ScenarioError(name, f"expected {m} integers, got {value!r}")
    return ints


def _float_vec(value, size: int, name: str) -> np.ndarray:
    try:
        arr = np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(name, f"expected numbers, got {value!r}") from exc
    if arr.shape != (size,):
        raise ScenarioError(name, f"expected {size} entries, got {arr.size}")
    return arr


def _polynomial(value, nvars: int, name: str) -> Polynomial:
    if isinstance(value, (int, float)):
        return Polynomial.constant(float(value), nvars)
    try:
        return Polynomial(nvars, tuple((float(c), tuple(p)) for c, p in value))
    except InputError as exc:
        raise ScenarioError(name, str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ScenarioError(name, f"expected number or [[coef, powers], ...], got {value!r}") \
            from exc


def _segment(raw: dict, d: int, name: str):
    kind = raw.get("type")
    try:
        if kind == "line":
            return Line(_float_vec(raw["start"], d, f"{name}.start"),
                        _float_vec(raw["end"], d, f"{name}.end"), float(raw["duration"]))
        if kind == "smoothstep-line":
            return SmoothstepLine(_float_vec(raw["start"], d, f"{name}.start"),
                                  _float_vec(raw["end"], d, f"{name}.end"),
                                  float(raw["duration"]), raw.get("steepness", 2))
        if kind == "arc":
            axes = tuple(int(a) - 1 for a in raw["axes"])
            return Arc(_float_vec(raw["center"], d, f"{name}.center"), float(raw["radius"]),
                       axes, float(raw.get("start_angle", 0.0)), float(raw["sweep"]),
                       float(raw["duration"]))
    except KeyError as exc:
        raise ScenarioError(name, f"missing key {exc.args[0]!r}") from exc
    except ScenarioError:
        raise
    except InputError as exc:
        raise ScenarioError(name, str(exc)) from exc
    raise ScenarioError(f"{name}.type", f"unknown segment type {kind!r}")


def _path(raw: dict, d: int) -> ParameterPath:
    if not isinstance(raw, dict) or not raw.get("segments"):
        raise ScenarioError("path.segments", "need a non-empty list of segments")
    segs = tuple(_segment(s, d, f"path.segments[{i}]") for i, s in enumerate(raw["segments"]))
    warp = None
    if raw.get("time_warp") is not None:
        w = raw["time_warp"]
        if w.get("type") != "power":
            raise ScenarioError("path.time_warp.type", f"unknown warp {w.get('type')!r}")
        try:
            warp = PowerWarp(float(w["exponent"]))
        except (KeyError, InputError) as exc:
            raise ScenarioError("path.time_warp.exponent", str(exc)) from exc
    try:
        return ParameterPath(segs, warp)
    except InputError as exc:
        raise ScenarioError("path", str(exc)) from exc


def _connection(raw, m: int, d: int) -> ConnectionSpec:
    if not isinstance(raw, list):
        raise ScenarioError("connection", "expected a list of terms")
    terms = []
    for i, t in enumerate(raw):
        name = f"connection[{i}]"
        try:
            k, alpha = int(t["k"]) - 1, int(t["alpha"]) - 1
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(name, "needs integer 'k' and 'alpha'") from exc
        if not 0 <= k < m:
            raise ScenarioError(f"{name}.k", f"must be in 1..{m}, got {k + 1}")
        if not 0 <= alpha < d:
            raise ScenarioError(f"{name}.alpha", f"must be in 1..{d}, got {alpha + 1}")
        harmonic = _int_list(t.get("harmonic", [0] * m), m, f"{name}.harmonic")
        kind = t.get("kind", "constant")
        if kind not in ("constant", "cos", "sin"):
            raise ScenarioError(f"{name}.kind", f"must be constant, cos or sin, got {kind!r}")
        amp = _polynomial(t.get("amplitude", 1.0), d, f"{name}.amplitude")
        terms.append(ConnectionTerm(k, alpha, amp, harmonic, kind))
    return ConnectionSpec(m, d, tuple(terms))


def _validate_bands(sc: Scenario) -> None:
    for i, t in enumerate(sc.connection.terms):
        for k, (n, N) in enumerate(zip(t.harmonic, sc.cutoff)):
            if abs(n) > N:
                raise ScenarioError(f"connection[{i}].harmonic",
                                    f"band limit exceeded: |n_{k + 1}| = {abs(n)} > cutoff {N}")
    if sc.initial_modes:
        for n in sc.initial_modes:
            if any(abs(v) > N for v, N in zip(n, sc.cutoff)):
                raise ScenarioError("initial.spectral.modes",
                                    f"mode {list(n)} outside cutoff {list(sc.cutoff)}")
    if sc.grid < 2 * max(sc.cutoff) + 1:
        raise ScenarioError("grid", f"{sc.grid} points alias cutoff {list(sc.cutoff)}; "
                                    f"need at least {2 * max(sc.cutoff) + 1}")


def scenario_from_dict(raw: dict, name: str | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "expected a JSON object")
    try:
        m, d = int(raw["m"]), int(raw["d"])
    except KeyError as exc:
        raise ScenarioError(exc.args[0], "missing") from exc
    except (TypeError, ValueError) as exc:
        raise ScenarioError("m/d", "must be integers") from exc
    if m < 1 or d < 1:
        raise ScenarioError("m/d", f"must be >= 1, got m={m}, d={d}")
    connection = _connection(raw.get("connection", []), m, d)
    if "path" not in raw:
        raise ScenarioError("path", "missing")
    path = _path(raw["path"], d)
    try:
        lam = validate_lambda(raw.get("lambda", [0.0] * m), m)
    except InputError as exc:
        raise ScenarioError("lambda", str(exc)) from exc
    H = HamiltonianPoly.from_polynomial(_polynomial(raw.get("hamiltonian", []), m, "hamiltonian"))
    if "cutoff" not in raw:
        raise ScenarioError("cutoff", "missing")
    cutoff = _int_list(raw["cutoff"], m, "cutoff")
    if any(c < 0 for c in cutoff):
        raise ScenarioError("cutoff", "must be non-negative")
    dt = float(raw.get("dt", 1e-3))
    if not dt > 0:
        raise ScenarioError("dt", f"must be positive, got {dt}")
    method = raw.get("method", "expmid")
    if method not in METHODS:
        raise ScenarioError("method", f"must be one of {METHODS}, got {method!r}")
    t_end = raw.get("t_end")
    if t_end is not None:
        t_end = float(t_end)
        if not 0 <= t_end <= path.duration:
            raise ScenarioError("t_end", f"{t_end} outside path domain [0, {path.duration}]")

    initial = raw.get("initial", {})
    classical = modes = grid_values = None
    normalize = True
    if "classical" in initial:
        c = initial["classical"]
        classical = ClassicalState(0.0, _float_vec(c.get("I"), m, "initial.classical.I"),
                                   _float_vec(c.get("phi"), m, "initial.classical.phi"))
    if "spectral" in initial:
        s = initial["spectral"]
        normalize = bool(s.get("normalize", True))
        modes = {}
        try:
            for n, (re, im) in s["modes"]:
                key = _int_list(n, m, "initial.spectral.modes")
                modes[key] = modes.get(key, 0.0) + complex(re, im)
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError("initial.spectral.modes",
                                "expected [[n, [re, im]], ...]") from exc
    elif "grid" in initial:
        g = initial["grid"]
        normalize = bool(g.get("normalize", True))
        try:
            P = int(g["P"])
            vals = np.array([complex(re, im) for re, im in g["values"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError("initial.grid", "expected {'P': int, 'values': [[re, im], ...]}") \
                from exc
        if vals.size != P ** m:
            raise ScenarioError("initial.grid.values", f"expected {P ** m} values, got {vals.size}")
        grid_values = vals.reshape((P,) * m)

    sc = Scenario(
        name=str(raw.get("name", name or "scenario")),
        connection=connection, path=path, lam=lam, hamiltonian=H, cutoff=cutoff,
        dt=dt, method=method, grid=int(raw.get("grid", 128)), t_end=t_end,
        initial_classical=classical, initial_modes=modes, normalize_initial=normalize,
        initial_grid=grid_values, outputs=raw.get("outputs"), raw=raw,
    )
    _validate_bands(sc)
    return sc


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; failures name the offending field."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise InputError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"scenario {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(raw, name=path.stem)


def bundled_scenario_paths() -> list[Path]:
    root = resources.files("torus_holonomy") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def bundled_scenario(name: str) -> Scenario:
    for p in bundled_scenario_paths():
        if p.stem == name:
            return load_scenario(p)
    raise InputError(f"no bundled scenario named {name!r}")
