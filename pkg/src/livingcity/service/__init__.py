from .commands import SCHEMA, Command
from .eventlog import EventLog, Snapshot, WorldEvent, read_log, replay, snapshot, write_log
from .filter import FilterVerdict, filter_input
from .service import CompressedClock, Service

__all__ = [
    "SCHEMA",
    "Command",
    "CompressedClock",
    "EventLog",
    "FilterVerdict",
    "Service",
    "Snapshot",
    "WorldEvent",
    "filter_input",
    "read_log",
    "replay",
    "snapshot",
    "write_log",
]
