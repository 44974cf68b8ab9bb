import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import term
from torus_holonomy.classical import (
    ClassicalState,
    HamiltonianPoly,
    canonical_to_original,
    flow_map,
    hamilton_rhs,
    integrate_flow,
    inverse_flow,
    original_frame_flow,
    original_to_canonical,
    rk4,
    step_times,
    symplectic_defect,
    variational_flow,
)
from torus_holonomy.errors import InputError, IntegrationError
from torus_holonomy.geometry import (
    Arc,
    ConnectionSpec,
    Line,
    ParameterPath,
    SmoothstepLine,
    angle_difference,
    path_displacement,
    velocity_bound,
)

DT = 1e-3


def wrapped_err(a, b):
    return float(np.max(np.abs(angle_difference(a, b))))


# --- integrator plumbing ---------------------------------------------------

def test_step_times_land_on_end():
    ts = step_times(0.0, 1.0, 0.3)
    np.testing.assert_allclose(ts, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert ts[-1] == 1.0
    back = step_times(1.0, 0.0, 0.3)
    assert back[0] == 1.0 and back[-1] == 0.0


def test_rk4_exponential_fourth_order():
    errs = []
    for dt in (0.1, 0.05):
        _, y = rk4(lambda t, y: -y, np.array([1.0]), 0.0, 1.0, dt, record=False)
        errs.append(abs(y[0] - math.exp(-1.0)))
    assert 14 < errs[0] / errs[1] < 18


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_rk4_non_finite_raises():
    with pytest.raises(IntegrationError):
        rk4(lambda t, y: y**2, np.array([1.0]), 0.0, 2.0, 0.1)


# --- hamilton_rhs ----------------------------------------------------------

def test_rhs_constant_connection(unit_line):
    spec = ConnectionSpec.constant([[0.25]])
    dphi, dI = hamilton_rhs(spec, unit_line, ClassicalState(0.4, [3.0], [1.0]))
    np.testing.assert_array_equal(dphi, [0.25])
    np.testing.assert_array_equal(dI, [0.0])


def test_rhs_zero_velocity(cos_spec):
    still = ParameterPath((Line([0.2], [0.2], 1.0),))
    dphi, dI = hamilton_rhs(cos_spec, still, ClassicalState(0.5, [1.0], [0.3]))
    np.testing.assert_array_equal(dphi, [0.0])
    np.testing.assert_array_equal(dI, [0.0])


def test_rhs_cos_hand_check(unit_line):
    spec = ConnectionSpec(1, 1, (term(0, 0, 1.0, (1,), "cos"),))
    dphi, dI = hamilton_rhs(spec, unit_line, ClassicalState(0.0, [2.0], [math.pi / 2]))
    assert dphi[0] == pytest.approx(0.0, abs=1e-15)
    assert dI[0] == pytest.approx(2.0, abs=1e-15)


# --- integrate_flow --------------------------------------------------------

def test_flow_constant_translation(unit_line):
    spec = ConnectionSpec.constant([[0.7]])
    s0 = ClassicalState(0.0, [1.3], [6.0])
    end = integrate_flow(spec, unit_line, s0, 1.0, DT).final
    assert wrapped_err(end.phi, 6.0 + 0.7) < 1e-12
    assert end.I[0] == 1.3


def test_flow_zero_connection(unit_line):
    spec = ConnectionSpec(1, 1, ())
    s0 = ClassicalState(0.0, [1.3], [2.0])
    traj = integrate_flow(spec, unit_line, s0, 1.0, DT)
    assert np.all(traj.I == 1.3) and np.all(traj.phi == 2.0)


def test_flow_cos_richardson(cos_spec, unit_line):
    s0 = ClassicalState(0.0, [1.0], [0.0])
    a = integrate_flow(cos_spec, unit_line, s0, 1.0, DT).final
    b = integrate_flow(cos_spec, unit_line, s0, 1.0, DT / 2).final
    assert wrapped_err(a.phi, b.phi) <= 1e-8
    assert abs(a.I[0] - b.I[0]) <= 1e-8


def test_flow_cos_analytic(cos_spec, unit_line):
    # dphi/dt = 0.3 cos phi has tan(pi/4 + phi/2) = e^{0.3 t} from phi=0;
    # I cos phi is conserved along it.
    end = integrate_flow(cos_spec, unit_line, ClassicalState(0.0, [1.0], [0.0]), 1.0, DT).final
    expect = 2 * math.atan(math.exp(0.3)) - math.pi / 2
    assert wrapped_err(end.phi, expect) < 1e-12
    assert end.I[0] * math.cos(end.phi[0]) == pytest.approx(1.0, abs=1e-12)


def test_flow_trajectory_rows(cos_spec, unit_line):
    traj = integrate_flow(cos_spec, unit_line, ClassicalState(0.0, [1.0], [0.0]), 0.35, 0.1)
    rows = traj.rows()
    assert rows.shape == (5, 3)
    np.testing.assert_allclose(rows[:, 0], [0.0, 0.1, 0.2, 0.3, 0.35])


def test_flow_rejects_dimension_and_domain(cos_spec, unit_line):
    with pytest.raises(InputError):
        integrate_flow(cos_spec, unit_line, ClassicalState(0.0, [1.0, 2.0], [0.0, 0.0]), 1.0, DT)
    with pytest.raises(InputError):
        integrate_flow(cos_spec, unit_line, ClassicalState(0.0, [1.0], [0.0]), 1.5, DT)
    with pytest.raises(InputError):
        integrate_flow(cos_spec, unit_line, ClassicalState(0.0, [1.0], [0.0]), 1.0, -DT)


# --- variational and inverse flows -----------------------------------------

def test_variational_constant_identity(unit_line):
    spec = ConnectionSpec.constant([[0.3, 0.0], [1.0, 0.0]])
    path = ParameterPath((Line([0.0, 0.0], [1.0, 2.0], 1.0),))
    _, J = variational_flow(spec, path, ClassicalState(0.0, [1.0, 1.0], [0.0, 1.0]), 1.0, DT)
    assert np.array_equal(J, np.eye(2))


def test_variational_fd_oracle(cos_spec, unit_line):
    s0 = ClassicalState(0.0, [1.0], [0.0])
    end, J = variational_flow(cos_spec, unit_line, s0, 1.0, DT)
    assert np.linalg.det(J) > 0
    h = 1e-5
    plus = flow_map(cos_spec, unit_line, [1.0], [h], 1.0, DT)[0]
    minus = flow_map(cos_spec, unit_line, [1.0], [-h], 1.0, DT)[0]
    assert abs(J[0, 0] - (plus - minus) / (2 * h)) <= 1e-6


def noncommuting_loop():
    spec = ConnectionSpec(2, 2, (
        term(0, 0, 0.3, (1, 0), "cos", d=2),
        term(1, 1, 0.2, (1, -1), "sin", d=2),
        term(0, 1, 0.1, (0, 1), "cos", d=2),
    ))
    path = ParameterPath((Arc([0.0, 0.0], 1.0, (0, 1), 0.0, 2 * math.pi, 1.0),))
    return spec, path


def test_inverse_flow_composition_and_chain_rule():
    spec, path = noncommuting_loop()
    s0 = ClassicalState(0.0, [1.0, -0.5], [0.4, 2.0])
    end, Jf = variational_flow(spec, path, s0, 1.0, DT)
    pre, Ji = inverse_flow(spec, path, 1.0, end.phi, DT)
    assert wrapped_err(pre, s0.phi) <= 1e-7
    assert np.max(np.abs(Ji @ Jf - np.eye(2))) <= 1e-6
    assert np.linalg.det(Jf) > 0


def test_inverse_flow_constant_translation():
    L = np.array([[0.5, -0.2]])
    spec = ConnectionSpec.constant(L)
    path = ParameterPath((Line([0.0, 0.0], [1.0, 3.0], 1.0),))
    phi = np.array([[0.1], [3.0], [6.0]])
    pre, J = inverse_flow(spec, path, 1.0, phi, DT)
    shift = float((L @ path_displacement(path))[0])
    assert wrapped_err(pre, phi - shift) < 1e-12
    assert J.shape == (3, 1, 1) and np.all(J == 1.0)


def test_inverse_flow_batched_matches_single():
    spec, path = noncommuting_loop()
    phis = np.random.default_rng(1).uniform(0, 2 * np.pi, (4, 2))
    pre, J = inverse_flow(spec, path, 0.6, phis, DT)
    for k in range(4):
        p1, J1 = inverse_flow(spec, path, 0.6, phis[k], DT)
        np.testing.assert_allclose(pre[k], p1, atol=1e-14)
        np.testing.assert_allclose(J[k], J1, atol=1e-14)


# --- coordinate change and original frame ----------------------------------

def test_canonical_maps_zero_hamiltonian():
    s = ClassicalState(2.0, [1.0, 3.0], [0.3, 4.0])
    out = canonical_to_original(HamiltonianPoly.zero(2), s)
    np.testing.assert_array_equal(out.phi, s.phi)
    np.testing.assert_array_equal(out.I, s.I)


def test_canonical_maps_kinetic(kinetic):
    out = canonical_to_original(kinetic, ClassicalState(2.0, [1.0], [0.3]))
    assert out.phi[0] == pytest.approx(2.3)
    assert out.I[0] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0, 6.28), st.floats(0, 5))
def test_canonical_maps_are_inverse(I, phi, t):
    H = HamiltonianPoly(1, ((0.5, (2,)), (0.1, (1,)), (0.05, (3,))))
    s = ClassicalState(t, [I], [phi])
    back = original_to_canonical(H, canonical_to_original(H, s))
    assert wrapped_err(back.phi, s.phi) < 1e-9
    assert back.I[0] == s.I[0]


def test_original_frame_zero_hamiltonian_matches_flow(cos_spec, smooth_path):
    s0 = ClassicalState(0.0, [1.0], [0.2])
    a = integrate_flow(cos_spec, smooth_path, s0, 1.0, DT)
    b = original_frame_flow(cos_spec, smooth_path, HamiltonianPoly.zero(1), s0, 1.0, DT)
    np.testing.assert_array_equal(a.I, b.I)
    np.testing.assert_allclose(a.phi_unwrapped, b.phi_unwrapped, rtol=0, atol=1e-15)


def test_original_frame_constant(kinetic, unit_line):
    spec = ConnectionSpec.constant([[0.25]])
    end = original_frame_flow(spec, unit_line, kinetic, ClassicalState(0.0, [1.0], [0.0]),
                              1.0, DT).final
    assert end.I[0] == pytest.approx(1.0, abs=1e-14)
    assert end.phi[0] == pytest.approx(1.25, abs=1e-12)


def test_original_frame_matches_composition_m2():
    spec, path = noncommuting_loop()
    H = HamiltonianPoly(2, ((0.5, (2, 0)), (0.3, (1, 1)), (0.25, (0, 2))))
    s0 = ClassicalState(0.0, [0.7, -0.4], [1.0, 2.5])
    orig = original_frame_flow(spec, path, H, s0, 1.0, DT).final
    comp = canonical_to_original(H, integrate_flow(spec, path, s0, 1.0, DT).final)
    assert np.max(np.abs(orig.I - comp.I)) <= 1e-6
    assert wrapped_err(orig.phi, comp.phi) <= 1e-6


# --- invariants ------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 6.28), st.floats(-2, 2), st.floats(0, 6.28))
def test_symplectic_defect_small(I1, p1, I2, p2):
    spec, path = noncommuting_loop()
    assert symplectic_defect(spec, path, [I1, I2], [p1, p2], 0.5, 5e-3) <= 1e-6


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 6.28))
def test_pairing_invariant_cos(I, phi):
    # for Lambda = 0.3 cos phi the action flow preserves I cos(phi)
    spec = ConnectionSpec(1, 1, (term(0, 0, 0.3, (1,), "cos"),))
    path = ParameterPath((SmoothstepLine([0.0], [1.0], 1.0),))
    traj = integrate_flow(spec, path, ClassicalState(0.0, [I], [phi]), 1.0, 5e-3)
    q = traj.I[:, 0] * np.cos(traj.phi[:, 0])
    assert np.max(np.abs(q - q[0])) <= 1e-8


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3))
def test_linearity_in_actions(c):
    spec, path = noncommuting_loop()
    s0 = ClassicalState(0.0, [1.0, -0.5], [0.4, 2.0])
    a = integrate_flow(spec, path, s0, 1.0, 5e-3)
    b = integrate_flow(spec, path, ClassicalState(0.0, c * s0.I, s0.phi), 1.0, 5e-3)
    np.testing.assert_array_equal(a.phi_unwrapped, b.phi_unwrapped)
    np.testing.assert_allclose(b.I, c * a.I, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("steepness", [4, 8, 16])
def test_steep_drive_stays_bounded(steepness):
    amp = 0.8
    spec = ConnectionSpec(1, 1, (term(0, 0, amp, (1,), "cos"),))
    path = ParameterPath((SmoothstepLine([0.0], [5.0], 1.0, steepness=steepness),))
    traj = integrate_flow(spec, path, ClassicalState(0.0, [1.0], [0.1]), 1.0, DT)
    assert np.all(np.isfinite(traj.I)) and np.all(np.isfinite(traj.phi_unwrapped))
    bound = amp * spec.d * velocity_bound(path)
    speed = np.abs(np.diff(traj.phi_unwrapped[:, 0])) / np.diff(traj.t)
    assert np.max(speed) <= bound * (1 + 1e-9)
