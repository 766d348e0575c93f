from .features import KINDS, FeatureSpec, extract, extract_features, history_embedding
from .mitigation import PositionBias, estimate_position_bias, impression_weights, mitigation_weight
from .model import RankerModel, config_hash
from .policy import RankerPolicy
from .training import TrainConfig, TrainResult, build_impressions, evaluate_offline, split_rows, train

__all__ = [
    "KINDS", "FeatureSpec", "extract", "extract_features", "history_embedding",
    "PositionBias", "estimate_position_bias", "impression_weights", "mitigation_weight",
    "RankerModel", "config_hash", "RankerPolicy", "TrainConfig", "TrainResult",
    "build_impressions", "evaluate_offline", "split_rows", "train",
]
