"""Multi-tenant XGS-PON upstream scheduling: per-tenant virtual DBA instances
composed into one physical bandwidth map per frame."""

from vdba.dbru import DbruReport, DemandState, demand_snapshot, ingest
from vdba.engine import (
    FixedLowLatency,
    SliceDescriptor,
    SliceRegistry,
    StatusReporting,
    TrafficClass,
    register_algorithm,
    run_dba_cycle,
    water_fill,
)
from vdba.frame import (
    FrameClock,
    Grant,
    PhysicalBandwidthMap,
    VirtualBandwidthMap,
    VirtualRequest,
    usable_capacity,
    validate_physical_map,
)
from vdba.merge import MergePolicy, merge, merge_latency_probe
from vdba.runner import run
from vdba.scenario import Scenario, load_scenario

__version__ = "0.1.0"
