import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pytest

from gbe_nav.geometry import PolarExtent, PolarPoint
from gbe_nav.worldgen import vocabulary
from gbe_nav.worldgen.episodes import EpisodeSpec
from gbe_nav.worldgen.instructions import Instruction
from gbe_nav.worldgen.world import (
    EdgeSpec, NodeSpec, ObjectSpec, RegionSpec, World, nearest_target_distance
)

TOY_DIM = 4


def build_world(
    positions: Sequence[Tuple[float, float]],
    edges: Sequence[Tuple[int, ...]],
    homes: Optional[Dict[int, Sequence[int]]] = None,
    dim: int = TOY_DIM,
    features: Optional[np.ndarray] = None,
    world_id: str = "toy",
    seed: int = 0
) -> World:
    """A one-region world. Edges are (a, b) or (a, b, length), the default
    length being the euclidean distance; ``homes`` maps object ids to the
    nodes each object is visible from."""
    if features is None:
        features = np.random.default_rng(seed).standard_normal((len(positions), dim))
    nodes = tuple(
        NodeSpec(i, (float(x), float(y)), 0, tuple(float(v) for v in features[i]))
        for i, (x, y) in enumerate(positions))
    edge_specs = []
    for edge in edges:
        a, b = edge[:2]
        length = edge[2] if len(edge) == 3 else math.dist(positions[a], positions[b])
        edge_specs.append(EdgeSpec(min(a, b), max(a, b), float(length)))
    objects = tuple(
        ObjectSpec(
            object_id, "chair", ("red", "small", "round"), (),
            tuple((n, PolarExtent(PolarPoint(0.1 * n, 0.05), 0.4, 0.4)) for n in sorted(nodes_)),
            0, positions[sorted(nodes_)[0]], 1.0)
        for object_id, nodes_ in sorted((homes or {0: [len(positions) - 1]}).items()))
    return World(world_id, nodes, tuple(edge_specs), objects,
                 (RegionSpec(0, "kitchen", ()),))


def build_episode(
    world: World,
    start: int,
    object_id: int = 0,
    words: Sequence[str] = ("find", "the", "chair"),
    targets_visible: bool = True,
    episode_id: str = "toy/0"
) -> EpisodeSpec:
    obj = world.object(object_id)
    targets = obj.home_node_ids
    return EpisodeSpec(
        episode_id=episode_id,
        world_id=world.world_id,
        start_node=start,
        object_id=object_id,
        target_nodes=targets,
        instruction=Instruction(vocabulary.encode(list(words)), (True, False, False, False, False)),
        polar_labels=tuple(extent.center for _, extent in obj.home_nodes),
        shortest_path_length=nearest_target_distance(world, start, targets),
        start_threshold=0.0,
        instruction_id=f"{world.world_id}/{object_id}/1",
        targets_visible=targets_visible)


@pytest.fixture
def world_factory():
    return build_world


@pytest.fixture
def episode_factory():
    return build_episode


@pytest.fixture
def line_world():
    """0 - 1 - 2 - 3 on a line, 2 m apart, object visible from node 3."""
    return build_world([(0, 0), (2, 0), (4, 0), (6, 0)], [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def square_world():
    """A 4-cycle with a diagonal, object visible from nodes 2 and 3."""
    return build_world(
        [(0, 0), (3, 0), (3, 4), (0, 4)],
        [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)],
        homes={0: [2, 3]})
