"""Desk-scale lockstep co-simulation of traffic, radio, and driver logic.

One TCP coordinator owns the road world and a barrier clock; any number
of clients join over a compact binary protocol, read and write vehicle
state, and vote the clock forward together. Two embedded clients (a
broadcast radio medium and a perception/control loop) turn a scenario
file into a closed-loop run from the command line; external clients can
take the same seats over the wire.
"""

from .cli import run_simulation
from .client import ServerClosed, WireClient
from .coordinator import Coordinator, CoordinatorError, InvalidScenario, PortInUse
from .ego import EgoConfig
from .models import IdmParams, KraussParams
from .network import Edge, Junction, RoadNetwork
from .radio import ChannelModel, RadioMedium, load_attack_config
from .scenario import (
    ScenarioBundle,
    ScenarioError,
    parse_sumocfg,
    validate_bundle,
)
from .traffic import DemandEntry, TrafficLightProgram, TrafficWorld, VehicleType
from .wire import ProtocolError

__version__ = "0.1.0"

__all__ = [
    "ChannelModel",
    "Coordinator",
    "CoordinatorError",
    "DemandEntry",
    "Edge",
    "EgoConfig",
    "IdmParams",
    "InvalidScenario",
    "Junction",
    "KraussParams",
    "PortInUse",
    "ProtocolError",
    "RadioMedium",
    "RoadNetwork",
    "ScenarioBundle",
    "ScenarioError",
    "ServerClosed",
    "TrafficLightProgram",
    "TrafficWorld",
    "VehicleType",
    "WireClient",
    "load_attack_config",
    "parse_sumocfg",
    "run_simulation",
    "validate_bundle",
    "__version__",
]
