from .bias import BiasEstimate, bias_from_arrays, fit_random_intercept, same_provider_bias
from .disagreement import (
    DisagreementCurve, KDECurve, disagreement_curve, gaussian_kde,
    silverman_bandwidth, trapezoid_mass, ward_disagreement_data,
)
from .ranking import AgentRanking, rank_agents
from .severe import OverlapTable, SevereErrorReport, severe_error_flags, severe_overlap
from .stability import StabilityReport, human_stability, stability_summary

__all__ = [
    "AgentRanking",
    "BiasEstimate",
    "DisagreementCurve",
    "KDECurve",
    "OverlapTable",
    "SevereErrorReport",
    "StabilityReport",
    "bias_from_arrays",
    "disagreement_curve",
    "fit_random_intercept",
    "gaussian_kde",
    "human_stability",
    "rank_agents",
    "same_provider_bias",
    "severe_error_flags",
    "severe_overlap",
    "silverman_bandwidth",
    "stability_summary",
    "trapezoid_mass",
    "ward_disagreement_data",
]
