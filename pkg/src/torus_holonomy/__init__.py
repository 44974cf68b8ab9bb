"""Classical and quantum holonomy operators for adiabatic transport on invariant tori."""
from .classical import (
    ClassicalState,
    HamiltonianPoly,
    Trajectory,
    integrate_flow,
    inverse_flow,
    original_frame_flow,
    variational_flow,
)
from .errors import FlowFault, InputError, IntegrationError, LeakageError, LeakageWarning
from .evolution import (
    GeneratorAssembly,
    berry_multiplier,
    closed_form_evolve,
    holonomy_generator,
    propagate,
    propagator,
)
from .geometry import (
    Arc,
    ConnectionSpec,
    ConnectionTerm,
    Line,
    ParameterPath,
    Polynomial,
    PowerWarp,
    SmoothstepLine,
    eval_connection,
)
from .qtorus import ModeLattice, OperatorMatrix, SpectralState, quantize_affine
from .scenario import Scenario, bundled_scenario, load_scenario, scenario_from_dict

__version__ = "0.1.0"
