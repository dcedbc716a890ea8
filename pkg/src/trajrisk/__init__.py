"""Risk-weighted trajectory prediction toolkit.

Builds location-risk heatmaps from close vehicle-VRU encounters, trains
a mixture-density trajectory predictor whose per-example loss weights
come from those heatmaps (and from stationary-vehicle suppression), and
evaluates predictions stratified by speed and location risk.
"""

from . import _kernels
from .dataset import (AgentClass, MapSpec, PredictionExample, Rect, Scene,
                      SceneDataset, Track, apply_stationary_smoothing,
                      extract_examples, load_dataset, save_dataset,
                      split_scenes)
from .errors import (ConfigError, DatasetParseError, DomainError,
                     FrameGapError, MapReferenceError, MetricError,
                     NumericalError, SplitError, StructuralError,
                     TrajriskError, TrainingError)
from .metrics import (ExampleMetrics, SpeedStratum, StratifiedReport,
                      aggregate_report, boundary_violation,
                      classify_speed_stratum, fde_at, kde_nll_at,
                      score_example)
from .predictor import (MixturePrediction, ModelParams, TrainConfig,
                        build_features, forward, init_params,
                        load_checkpoint, predict_most_likely,
                        sample_trajectories, save_checkpoint, train)
from .riskmap import (RiskHeatmap, RiskStratum, assign_risk_stratum,
                      build_heatmap, lookup_weight, normalize_to_weights)
from .simgen import (CrosswalkSpec, GroundTruthAnnotations, RoadSpec,
                     WorldConfig, generate_world, simulate_scenes)

__version__ = "0.1.0"
