"""Two-tier vPON over MESH-PON fronthaul simulator.

Discrete-event simulation of 5G uplink fronthaul carried over virtualized
PON slices, comparing cooperative and status-report bandwidth allocation
for URLLC and normal traffic.
"""

__version__ = "0.1.0"

from .scenario import Scenario, parse_scenario
from .simulation import SimulationResult, VponSimulation, run_scenario

__all__ = ["Scenario", "SimulationResult", "VponSimulation", "parse_scenario", "run_scenario"]
