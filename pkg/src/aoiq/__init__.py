"""Exact and simulated age-of-information statistics for the single-source
M/G/1/1 queue under a probabilistically preemptive packet management policy."""

__version__ = "0.1.0"

from .analytic import (
    AnalyticSummary,
    SystemConfig,
    aoi_mgf,
    aoi_moment,
    average_aoi,
    average_aoi_no_preemption,
    average_paoi,
    average_paoi_no_preemption,
    delivery_prob,
    interdeparture_mgf,
    interdeparture_mgf_geometric,
    interdeparture_second_moment,
    mean_interdeparture,
    mean_system_time,
    mgf_roc,
    paoi_mgf,
    paoi_moment,
    sojourn_pdf_eta,
    sojourn_pdf_etabar,
    summarize,
    system_time_mgf,
    system_time_pdf,
)
from .distributions import (
    Deterministic,
    Exponential,
    Gamma,
    LogNormal,
    ServiceDistribution,
    Uniform,
    parse_dist,
)
from .errors import (
    AoiqError,
    ConfigMismatchError,
    DegenerateError,
    DistSpecError,
    DomainError,
    PrecisionError,
    QuadratureError,
)
from .optimizer import Optimum, SweepRow, optimize_theta, sweep_theta
from .simulator import (
    DeliveryRecord,
    InterdepartureDecomposition,
    SimConfig,
    SimSummary,
    Trajectory,
    aoi_time_average,
    decompose_interdeparture,
    empirical_transform,
    merge_replications,
    run,
    write_records_csv,
)

__all__ = [
    "AnalyticSummary",
    "AoiqError",
    "ConfigMismatchError",
    "DegenerateError",
    "DeliveryRecord",
    "Deterministic",
    "DistSpecError",
    "DomainError",
    "Exponential",
    "Gamma",
    "InterdepartureDecomposition",
    "LogNormal",
    "Optimum",
    "PrecisionError",
    "QuadratureError",
    "ServiceDistribution",
    "SimConfig",
    "SimSummary",
    "SweepRow",
    "SystemConfig",
    "Trajectory",
    "Uniform",
    "aoi_mgf",
    "aoi_moment",
    "aoi_time_average",
    "average_aoi",
    "average_aoi_no_preemption",
    "average_paoi",
    "average_paoi_no_preemption",
    "decompose_interdeparture",
    "delivery_prob",
    "empirical_transform",
    "interdeparture_mgf",
    "interdeparture_mgf_geometric",
    "interdeparture_second_moment",
    "mean_interdeparture",
    "mean_system_time",
    "merge_replications",
    "mgf_roc",
    "optimize_theta",
    "paoi_mgf",
    "paoi_moment",
    "parse_dist",
    "run",
    "sojourn_pdf_eta",
    "sojourn_pdf_etabar",
    "summarize",
    "sweep_theta",
    "system_time_mgf",
    "system_time_pdf",
    "write_records_csv",
    "__version__",
]
