from typing import NamedTuple, Optional, FrozenSet, Tuple

from gbe_nav import constants


class WorldConfig(NamedTuple):
    node_count: int = 50
    region_count: int = 6
    object_count: int = 12

    # dimension of the synthetic panoramic feature of a node
    vision_dim: int = constants.VISION_DIM

    # house surface per navigable node, in square meters. Together with
    # node_count it sets the house size.
    area_per_node: float = 9.0

    # nodes closer than this (meters) are connected
    connect_radius: float = 5.0

    # an object is visible from nodes of its region within this distance
    visibility_radius: float = 4.0

    # attempts at sampling a connected layout before giving up
    max_retries: int = 50

    feature_noise: float = 0.1


class DatasetConfig(NamedTuple):
    world: WorldConfig = WorldConfig()

    # houses used for training (and the seen-house validation splits)
    n_seen_worlds: int = 6

    # houses only used by the unseen-house validation split
    n_unseen_worlds: int = 2

    # houses only used by the test split
    n_test_worlds: int = 2

    episodes_per_object: int = 4

    # share of each seen house's objects whose instructions are held out
    # for the seen-house validation split
    seen_house_holdout: float = 0.25

    # instruction segments, see gbe_nav.worldgen.instructions
    granularity: FrozenSet[int] = frozenset({1, 2, 3, 4})

    seed: int = 0


class ModelConfig(NamedTuple):
    vision_dim: int = constants.VISION_DIM
    hidden_dim: int = constants.HIDDEN_DIM
    word_dim: int = 32
    gcn_layers: int = 2

    # "graph": average the current node with its neighbors in E,
    # "observed": with the neighbors observed at this step
    readout_scope: str = "graph"

    # modality ablations, inputs of that modality are replaced by zeros
    zero_vision: bool = False
    zero_language: bool = False


class TrainConfig(NamedTuple):
    # weights of the imitation, reinforcement and graph-exploration terms
    lambda_il: float = 0.5
    lambda_rl: float = 0.25
    lambda_ge: float = 0.25

    # weight of the critic regression used by the RL term
    critic_weight: float = 0.5

    # entropy bonus of the RL term, disabled by default
    entropy_coef: float = 0.0

    gamma: float = 0.95
    learning_rate: float = 1e-3
    iterations: int = 2000
    batch_size: int = 1

    # rollout modes run on every sampled episode, in this order
    mode_schedule: Tuple[str, ...] = ("il", "rl", "ge")

    max_decisions: int = constants.MAX_DECISIONS
    success_radius: float = constants.SUCCESS_RADIUS_M

    # periodic evaluation on the validation splits, 0 disables it
    eval_every: int = 250
    eval_episodes: int = 50

    checkpoint_every: int = 500
    seed: int = 0


class RunConfig(NamedTuple):
    subcommand: str
    seed: int = 0
    dataset_dir: Optional[str] = None
    output_dir: Optional[str] = None
    train: TrainConfig = TrainConfig()
    model: ModelConfig = ModelConfig()
    granularity: Optional[FrozenSet[int]] = None
    no_ge: bool = False


class ConfigError(ValueError):
    """Invalid configuration."""


def check_world_config(config: WorldConfig) -> None:
    if config.node_count < 2:
        raise ConfigError(f"node_count must be >= 2. Got {config.node_count}")
    if config.object_count < 1:
        raise ConfigError(f"object_count must be >= 1. Got {config.object_count}")
    if config.region_count < 1:
        raise ConfigError(f"region_count must be >= 1. Got {config.region_count}")
    if config.vision_dim < 1:
        raise ConfigError(f"vision_dim must be >= 1. Got {config.vision_dim}")


def check_train_config(config: TrainConfig) -> None:
    for name in ("lambda_il", "lambda_rl", "lambda_ge", "critic_weight", "entropy_coef"):
        if getattr(config, name) < 0:
            raise ConfigError(f"{name} must be >= 0. Got {getattr(config, name)}")
    if not 0 < config.gamma <= 1:
        raise ConfigError(f"gamma must be in (0, 1]. Got {config.gamma}")
    if config.iterations < 0:
        raise ConfigError(f"iterations must be >= 0. Got {config.iterations}")
    if config.batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1. Got {config.batch_size}")
    unknown = set(config.mode_schedule) - {"il", "rl", "ge"}
    if unknown:
        raise ConfigError(f"unknown rollout modes {sorted(unknown)}")


def check_model_config(config: ModelConfig) -> None:
    if config.readout_scope not in ("graph", "observed"):
        raise ConfigError(
            f"readout_scope must be 'graph' or 'observed'. Got {config.readout_scope}")
    if config.gcn_layers < 0:
        raise ConfigError(f"gcn_layers must be >= 0. Got {config.gcn_layers}")
