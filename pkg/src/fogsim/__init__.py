"""fogsim: a deterministic discrete-event simulator for fog computing."""

from fogsim.application import Application, MessageType
from fogsim.engine import Simulation, SimHandle
from fogsim.results import ResultSet, read_csv, sequence_latency, windowed, write_csv
from fogsim.scenario import Scenario, load_scenario, run_scenario, scenario_from_dict
from fogsim.topology import Topology, load_topology

__version__ = "0.1.0"

__all__ = [
    "Application",
    "MessageType",
    "ResultSet",
    "Scenario",
    "SimHandle",
    "Simulation",
    "Topology",
    "load_scenario",
    "load_topology",
    "read_csv",
    "run_scenario",
    "scenario_from_dict",
    "sequence_latency",
    "windowed",
    "write_csv",
]
