"""Task instances: a start node, an instruction and the target object's nodes."""
import logging
from collections import Counter
from typing import (
    AbstractSet, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple
)

import numpy as np

from gbe_nav import constants
from gbe_nav.experiment import DatasetConfig
from gbe_nav.geometry import PolarPoint
from gbe_nav.worldgen.instructions import Instruction, check_granularity, generate_instruction
from gbe_nav.worldgen.world import World, generate_world, nearest_target_distance

logger = logging.getLogger(__name__)


class EpisodeSpec(NamedTuple):
    episode_id: str
    world_id: str
    start_node: int
    object_id: int
    # every node the object is visible from, sorted
    target_nodes: Tuple[int, ...]
    instruction: Instruction
    # polar label of the object at each target node, same order as target_nodes
    polar_labels: Tuple[PolarPoint, ...]
    # meters, to the nearest target node
    shortest_path_length: float
    # start distance threshold in force when the start node was accepted
    start_threshold: float
    # identifies (world, object, granularity): shared by episodes reusing an instruction
    instruction_id: str
    # False on the test split: targets must not be exposed to a policy
    targets_visible: bool = True

    def label_at(self, node_id: int) -> PolarPoint:
        return self.polar_labels[self.target_nodes.index(node_id)]


class StartSample(NamedTuple):
    node: int
    distance: float
    threshold: float
    attempts: int


class Dataset(NamedTuple):
    worlds: Dict[str, World]
    splits: Dict[str, List[EpisodeSpec]]
    config: DatasetConfig


class DatasetStats(NamedTuple):
    n_episodes: int
    n_instructions: int
    mean_tokens: float
    min_tokens: int
    max_tokens: int
    mean_path_length: float
    min_path_length: float
    max_path_length: float
    # episodes per 5 m bucket of shortest-path length
    path_length_histogram: Dict[int, int]


def sample_trajectory(
    world: World,
    target_nodes: AbstractSet[int],
    rng: np.random.Generator,
    exclude: AbstractSet[int] = frozenset(),
    threshold: float = constants.START_THRESHOLD_M,
    decay: float = constants.THRESHOLD_DECAY,
    failures_per_decay: int = constants.FAILURES_PER_DECAY
) -> StartSample:
    """Sample a start node farther than a decaying threshold from every target.

    Starts are drawn uniformly among non-target nodes; the threshold is
    discounted by ``decay`` after every ``failures_per_decay`` consecutive
    rejections.
    """
    if not target_nodes:
        raise ValueError("target_nodes must not be empty")
    targets = tuple(sorted(target_nodes))
    pool = [n for n in range(world.n_nodes) if n not in target_nodes and n not in exclude]
    if not pool:
        pool = [n for n in range(world.n_nodes) if n not in target_nodes]
    if not pool:
        raise ValueError(f"every node of {world.world_id} is a target node")

    failures = 0
    attempts = 0
    while True:
        attempts += 1
        node = pool[int(rng.integers(len(pool)))]
        distance = nearest_target_distance(world, node, targets)
        if distance > threshold:
            return StartSample(node, distance, threshold, attempts)
        failures += 1
        if failures % failures_per_decay == 0:
            threshold *= decay


def make_episodes(
    world: World,
    object_ids: Iterable[int],
    episodes_per_object: int,
    granularity: AbstractSet[int],
    rng: np.random.Generator,
    split: str,
    targets_visible: bool = True
) -> List[EpisodeSpec]:
    levels = check_granularity(granularity)
    episodes = []
    for object_id in object_ids:
        obj = world.object(object_id)
        targets = obj.home_node_ids
        if len(targets) == world.n_nodes:
            logger.warning(f"{world.world_id}: object {object_id} is visible from every "
                           "node, no start can be sampled")
            continue
        instruction = generate_instruction(world, obj, levels)
        used: set = set()
        for _ in range(episodes_per_object):
            sample = sample_trajectory(world, set(targets), rng, exclude=used)
            used.add(sample.node)
            episodes.append(_episode(
                world, obj.object_id, sample, instruction, levels, split,
                len(episodes), targets_visible))
    return episodes


def reuse_instructions(
    world: World,
    episodes: Sequence[EpisodeSpec],
    rng: np.random.Generator,
    split: str
) -> List[EpisodeSpec]:
    """One new-start episode per instruction of ``episodes``, same instruction."""
    starts_by_instruction: Dict[str, set] = {}
    first: Dict[str, EpisodeSpec] = {}
    for episode in episodes:
        starts_by_instruction.setdefault(episode.instruction_id, set()).add(episode.start_node)
        first.setdefault(episode.instruction_id, episode)
    reused = []
    for instruction_id in sorted(first):
        source = first[instruction_id]
        sample = sample_trajectory(
            world, set(source.target_nodes), rng,
            exclude=starts_by_instruction[instruction_id])
        reused.append(source._replace(
            episode_id=f"{split}/{world.world_id}/{len(reused)}",
            start_node=sample.node,
            shortest_path_length=sample.distance,
            start_threshold=sample.threshold))
    return reused


def _episode(
    world: World,
    object_id: int,
    sample: StartSample,
    instruction: Instruction,
    levels: AbstractSet[int],
    split: str,
    index: int,
    targets_visible: bool
) -> EpisodeSpec:
    obj = world.object(object_id)
    labels = tuple(extent.center for _, extent in obj.home_nodes)
    granularity_key = "".join(str(level) for level in sorted(levels))
    return EpisodeSpec(
        episode_id=f"{split}/{world.world_id}/{index}",
        world_id=world.world_id,
        start_node=sample.node,
        object_id=object_id,
        target_nodes=obj.home_node_ids,
        instruction=instruction,
        polar_labels=labels,
        shortest_path_length=sample.distance,
        start_threshold=sample.threshold,
        instruction_id=f"{world.world_id}/{object_id}/{granularity_key}",
        targets_visible=targets_visible)


def world_seeds(config: DatasetConfig) -> Dict[str, List[int]]:
    base = config.seed * 10_000
    return {
        "seen": [base + i for i in range(config.n_seen_worlds)],
        "unseen": [base + 1_000 + i for i in range(config.n_unseen_worlds)],
        "test": [base + 2_000 + i for i in range(config.n_test_worlds)],
    }


def build_dataset(config: DatasetConfig = DatasetConfig()) -> Dataset:
    """Generate every house and the five splits.

    Seen houses provide the train split and two validation splits: the same
    instructions from new starts, and held-out objects (new instructions).
    Unseen houses provide the unseen-house validation split and the test split.
    """
    seeds = world_seeds(config)
    worlds: Dict[str, World] = {}
    splits: Dict[str, List[EpisodeSpec]] = {split: [] for split in constants.SPLITS}
    few = max(1, config.episodes_per_object // 2)

    for i, seed in enumerate(seeds["seen"]):
        world = generate_world(seed, config.world)
        worlds[world.world_id] = world
        rng = np.random.default_rng([config.seed, 0, i])
        object_ids = [int(o) for o in rng.permutation(len(world.objects))]
        n_held_out = int(round(config.seen_house_holdout * len(object_ids)))
        held_out, trained = object_ids[:n_held_out], object_ids[n_held_out:]
        train = make_episodes(world, sorted(trained), config.episodes_per_object,
                              config.granularity, rng, "train")
        splits["train"] += train
        splits["val_seen_instruction"] += reuse_instructions(
            world, train, rng, "val_seen_instruction")
        splits["val_seen_house"] += make_episodes(
            world, sorted(held_out), few, config.granularity, rng, "val_seen_house")

    for name, split, visible in (("unseen", "val_unseen_house", True),
                                 ("test", "test", False)):
        for i, seed in enumerate(seeds[name]):
            world = generate_world(seed, config.world)
            worlds[world.world_id] = world
            rng = np.random.default_rng([config.seed, constants.SPLITS.index(split), i])
            splits[split] += make_episodes(
                world, range(len(world.objects)), few, config.granularity, rng,
                split, targets_visible=visible)

    for split, episodes in splits.items():
        logger.info(f"split {split}: {len(episodes)} episodes")
    return Dataset(worlds, splits, config)


def with_granularity(
    episodes: Sequence[EpisodeSpec],
    worlds: Dict[str, World],
    granularity: AbstractSet[int]
) -> List[EpisodeSpec]:
    """Re-generate the instruction of every episode at another granularity."""
    levels = check_granularity(granularity)
    key = "".join(str(level) for level in sorted(levels))
    result = []
    for episode in episodes:
        world = worlds[episode.world_id]
        instruction = generate_instruction(world, world.object(episode.object_id), levels)
        result.append(episode._replace(
            instruction=instruction,
            instruction_id=f"{episode.world_id}/{episode.object_id}/{key}"))
    return result


def dataset_stats(episodes: Sequence[EpisodeSpec]) -> Optional[DatasetStats]:
    if not episodes:
        return None
    tokens = [len(e.instruction.tokens) for e in episodes]
    lengths = [e.shortest_path_length for e in episodes]
    histogram = Counter(int(length // 5) * 5 for length in lengths)
    return DatasetStats(
        n_episodes=len(episodes),
        n_instructions=len({e.instruction_id for e in episodes}),
        mean_tokens=float(np.mean(tokens)),
        min_tokens=min(tokens),
        max_tokens=max(tokens),
        mean_path_length=float(np.mean(lengths)),
        min_path_length=min(lengths),
        max_path_length=max(lengths),
        path_length_histogram=dict(sorted(histogram.items())))
