"""Curvature-based monitoring of dynamic AS-level graphs.

The package embeds a changing AS-level graph into a low-dimensional space
of vertex-pair curvatures toward a fixed set of landmark ASes, and flags
large-scale topology events from the statistics of inter-snapshot
curvature-change matrices.
"""

from .curvature import (
    CurvatureMatrix,
    DeltaMatrix,
    build_curvature_rows,
    delta,
    mass_distribution,
    ricci_curvature,
)
from .detector import (
    CalibrationReport,
    DetectionPoint,
    calibrate,
    classify,
    curvature_balance,
    detection_point,
    frobenius_energy,
    stable_rank,
)
from .feed import (
    FeedRecord,
    RouteTable,
    apply_record,
    parse_feed_line,
    read_feed,
    run_ingest,
)
from .graph import (
    AsEdge,
    AsGraph,
    AsGraphSnapshot,
    AsVertex,
    export_snapshot,
    import_snapshot,
)
from .landmarks import LandmarkSet, mcmc_lazy_walk, score_p, score_s1, score_s2, select
from .ot import MassDistribution, TransportPlan, exact_ot, sinkhorn_ot
from .pipeline import MonitorConfig, run_pipeline
from .rootcause import PlanDiff, plan_diff, top_movers
from .synth import Scenario, Topology, emit_feed, gen_topology, scenario_from_toml

__version__ = "0.1.0"

__all__ = [
    "AsEdge",
    "AsGraph",
    "AsGraphSnapshot",
    "AsVertex",
    "CalibrationReport",
    "CurvatureMatrix",
    "DeltaMatrix",
    "DetectionPoint",
    "FeedRecord",
    "LandmarkSet",
    "MassDistribution",
    "MonitorConfig",
    "PlanDiff",
    "RouteTable",
    "Scenario",
    "Topology",
    "TransportPlan",
    "apply_record",
    "build_curvature_rows",
    "calibrate",
    "classify",
    "curvature_balance",
    "delta",
    "detection_point",
    "emit_feed",
    "exact_ot",
    "export_snapshot",
    "frobenius_energy",
    "gen_topology",
    "import_snapshot",
    "mass_distribution",
    "mcmc_lazy_walk",
    "parse_feed_line",
    "plan_diff",
    "read_feed",
    "ricci_curvature",
    "run_ingest",
    "run_pipeline",
    "scenario_from_toml",
    "score_p",
    "score_s1",
    "score_s2",
    "select",
    "sinkhorn_ot",
    "stable_rank",
    "top_movers",
]
