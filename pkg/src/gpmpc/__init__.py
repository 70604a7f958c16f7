"""Uncertainty-aware model predictive impedance control.

Gaussian-process force models learned from a few demonstrations drive a
stochastic multiple-shooting MPC that plans a force-reference trajectory
together with virtual impedance parameters, subject to contact-safety
constraints. Everything runs in closed-loop simulation; see the ``sim``
module for the scenario runner and ``cli`` for the command-line surface.
"""

from gpmpc.gp_force import GpHyper, HingeMean, AxisGp, GpForceModel
from gpmpc.admittance import ImpedanceParams, StateDist, DiscreteDynamics
from gpmpc.human_arm import ArmGeometry
from gpmpc.mode_belief import Belief

__all__ = [
    "GpHyper",
    "HingeMean",
    "AxisGp",
    "GpForceModel",
    "ImpedanceParams",
    "StateDist",
    "DiscreteDynamics",
    "ArmGeometry",
    "Belief",
]

__version__ = "0.1.0"
