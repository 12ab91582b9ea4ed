"""Optimal structured output-feedback control with communication delays.

Agents on a directed graph each measure their own subsystem and exchange
commands with their descendants after a fixed delay.  The package
synthesizes the H2-optimal controller, realizes it agent by agent, computes
its cost and simulates the delayed closed loop.
"""

from .config import ProblemConfig, load_config
from .cost import cost_centralized, cost_dec_delayed, cost_decentralized, cost_delayed, cost_report
from .delay_blocks import DelayedSystem, FirBlock
from .delay_sim import SimConfig, empirical_h2_sq, simulate
from .errors import H2DelayError, NumericalError, ValidationError
from .lti import StateSpace
from .plant import Plant
from .riccati import ric, ric_dual
from .synthesis import AgentController, agent_controllers, aggregate_controllers, k_opt_delayed
from .topology import DiGraph

__version__ = "0.1.0"

__all__ = [
    "ProblemConfig", "load_config", "cost_centralized", "cost_dec_delayed", "cost_decentralized",
    "cost_delayed", "cost_report", "DelayedSystem", "FirBlock", "SimConfig", "empirical_h2_sq",
    "simulate", "H2DelayError", "NumericalError", "ValidationError", "StateSpace", "Plant", "ric",
    "ric_dual", "AgentController", "agent_controllers", "aggregate_controllers", "k_opt_delayed",
    "DiGraph",
]
