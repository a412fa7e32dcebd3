"""Per-station tick pipeline, lifecycle state machine and multi-station supervisor."""

from .station import BatchResult, EngineError, Lifecycle, SafetyEvent, Station
from .supervisor import Command, CommandResult, Supervisor, run_supervisor

__all__ = [
    "BatchResult",
    "Command",
    "CommandResult",
    "EngineError",
    "Lifecycle",
    "SafetyEvent",
    "Station",
    "Supervisor",
    "run_supervisor",
]
