"""Device-free localization from CSI magnitude profiles.

Pipeline: CSI windows -> random context filters -> Haar-like features ->
jointly boosted per-location classifiers -> fused posterior -> discrete and
continuous location estimates. ``synth_env`` provides synthetic testbeds.
"""

from .csi_model import (
    ConfigurationError,
    CsiPacket,
    CsiWindow,
    Fingerprint,
    FingerprintLocation,
    LinkId,
    MalformedInputError,
    MissingLinkError,
    PacketTable,
    build_windows,
    filter_outliers,
    magnitude_bounds,
)
from .estimator import LocationEstimate, Posterior, estimate_continuous, estimate_discrete, fuse, locate
from .evaluation import EvalReport, ExperimentConfig, evaluate, fit_model, select_links, sweep
from .feature_bank import (
    ContextFilter,
    FeaturePair,
    FeatureVector,
    FilterBank,
    count_in_filter,
    extract_features,
    haar_feature,
    sample_filter_bank,
)
from .joint_boost import BoostModel, ClassifierOutput, SharedStump, TrainConfig, classify, fit_shared_stump, train
from .synth_env import Scenario, ScenarioConfig, build_scenario, generate_packets, make_fingerprint, make_test_set

__version__ = "0.1.0"

__all__ = [
    "BoostModel", "ClassifierOutput", "ConfigurationError", "ContextFilter", "CsiPacket", "CsiWindow",
    "EvalReport", "ExperimentConfig", "FeaturePair", "FeatureVector", "FilterBank", "Fingerprint",
    "FingerprintLocation", "LinkId", "LocationEstimate", "MalformedInputError", "MissingLinkError",
    "PacketTable", "Posterior", "Scenario", "ScenarioConfig", "SharedStump", "TrainConfig",
    "build_scenario", "build_windows", "classify", "count_in_filter", "estimate_continuous",
    "estimate_discrete", "evaluate", "extract_features", "filter_outliers", "fit_model",
    "fit_shared_stump", "fuse", "generate_packets", "haar_feature", "locate", "magnitude_bounds",
    "make_fingerprint", "make_test_set",
    "sample_filter_bank", "select_links", "sweep", "train",
]
