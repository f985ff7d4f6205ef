from .scenario import Scenario, load_scenario
from .simulation import RunReport, Simulation, run
from .system import System, build_system

__all__ = ["RunReport", "Scenario", "Simulation", "System", "build_system", "load_scenario", "run"]
