from gbe_nav.env import NavEnv, Stop, GotoNode, EpisodeResult, EnvError
from gbe_nav.experiment import ConfigError, DatasetConfig, ModelConfig, TrainConfig, WorldConfig
from gbe_nav.metrics import SplitMetrics, summarize
from gbe_nav.policy import GBEAgent
from gbe_nav.tasks.trainer import TrainingAborted, train

__all__ = [
    "NavEnv", "Stop", "GotoNode", "EpisodeResult", "EnvError", "ConfigError",
    "DatasetConfig", "ModelConfig", "TrainConfig", "WorldConfig", "SplitMetrics",
    "summarize", "GBEAgent", "TrainingAborted", "train"
]
