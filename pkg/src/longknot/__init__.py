"""Configuration-space integrals for long codimension-two knots, evaluated by Monte Carlo."""

__version__ = "0.1.0"

from .configspace import Configuration, ConfigurationPoint, ProposalSpec, sample  # noqa: E402
from .diagrams import Diagram, compile_integrand, enumerate_connected, grading, symmetry_factor  # noqa: E402
from .exterior import AltForm, pullback, sphere_volume_form, wedge  # noqa: E402
from .geometry import IsotopyPath, LongKnot, LoopCurve, make_knot  # noqa: E402
from .invariants import (  # noqa: E402
    InvariantResult,
    dtheta1_probe,
    linking_number,
    mixed_expectation,
    theta1,
    theta2,
    theta3,
)
from .mc import Estimate, integrate  # noqa: E402
from .propagators import eta_at, theta_at  # noqa: E402

__all__ = [
    "AltForm", "Configuration", "ConfigurationPoint", "Diagram", "Estimate", "InvariantResult",
    "IsotopyPath", "LongKnot", "LoopCurve", "ProposalSpec", "compile_integrand", "dtheta1_probe",
    "enumerate_connected", "eta_at", "grading", "integrate", "linking_number", "make_knot",
    "mixed_expectation", "pullback", "sample", "sphere_volume_form", "symmetry_factor", "theta1",
    "theta2", "theta3", "theta_at", "wedge",
]
