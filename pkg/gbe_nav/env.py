"""Episode runtime over a World's navigation graph.

The agent acts on its own graph of observed nodes, so a ``GotoNode`` may
target any frontier node. The environment executes it as the shortest graph
path from the current node, charging the metric length of every traversed
edge.
"""
import logging
from dataclasses import dataclass
from typing import AbstractSet, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from gbe_nav import constants
from gbe_nav.geometry import PolarPoint
from gbe_nav.worldgen.episodes import EpisodeSpec
from gbe_nav.worldgen.world import World

logger = logging.getLogger(__name__)


class EnvError(Exception):
    """Illegal use of the environment."""


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class GotoNode:
    node_id: int


NavAction = Union[Stop, GotoNode]

STOP = Stop()


class StepObservation(NamedTuple):
    node_id: int
    feature: np.ndarray
    # (node id, feature) of every graph neighbor, sorted by node id
    neighbors: Tuple[Tuple[int, np.ndarray], ...]
    gps: Tuple[float, float]
    n_decisions: int
    done: bool = False


class EpisodeResult(NamedTuple):
    episode_id: str
    # every node the agent stood on, intermediate nodes of multi-hop moves included
    visited: Tuple[int, ...]
    path_length: float
    stop_node: int
    localization: Optional[PolarPoint]
    n_decisions: int
    # False when the decision cap ended the episode
    stopped: bool


def shortest_distance(world: World, a: int, b: int) -> float:
    for node_id in (a, b):
        if not world.has_node(node_id):
            raise EnvError(f"unknown node {node_id} in {world.world_id}")
    return float(world.distances[a, b])


class NavEnv:

    def __init__(self, max_decisions: int = constants.MAX_DECISIONS):
        if max_decisions < 1:
            raise ValueError(f"max_decisions must be >= 1. Got {max_decisions}")
        self.max_decisions = max_decisions
        self._world: Optional[World] = None
        self._episode: Optional[EpisodeSpec] = None
        self._visited: List[int] = []
        self._path_length = 0.0
        self._n_decisions = 0
        self._localization: Optional[PolarPoint] = None
        self._done = True

    @property
    def world(self) -> World:
        if self._world is None:
            raise EnvError("reset must be called first")
        return self._world

    @property
    def current_node(self) -> int:
        return self._visited[-1]

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, world: World, episode: EpisodeSpec) -> StepObservation:
        if episode.world_id != world.world_id:
            raise EnvError(
                f"episode {episode.episode_id} belongs to {episode.world_id}, "
                f"not {world.world_id}")
        if not world.has_node(episode.start_node):
            raise EnvError(f"start node {episode.start_node} not in {world.world_id}")
        self._world = world
        self._episode = episode
        self._visited = [episode.start_node]
        self._path_length = 0.0
        self._n_decisions = 0
        self._localization = None
        self._done = False
        return self.observation()

    def observation(self) -> StepObservation:
        world = self.world
        node_id = self.current_node
        neighbors = tuple((n, world.features[n]) for n in world.neighbors(node_id))
        x, y = world.nodes[node_id].position
        return StepObservation(
            node_id, world.features[node_id], neighbors, (x, y), self._n_decisions, self._done)

    def step(
        self,
        action: NavAction,
        frontier: Optional[AbstractSet[int]] = None,
        localization: Optional[PolarPoint] = None
    ) -> Union[StepObservation, EpisodeResult]:
        """Execute one decision.

        ``frontier`` is the set of nodes the agent may jump to; direct
        neighbors are always allowed. ``localization`` is the agent's latest
        object direction estimate, reported in the EpisodeResult.
        """
        if self._done:
            raise EnvError("episode is done, call reset")
        if localization is not None:
            self._localization = localization
        self._n_decisions += 1

        if isinstance(action, Stop):
            return self._finish(stopped=True)
        if not isinstance(action, GotoNode):
            raise EnvError(f"unknown action {action!r}")

        world = self.world
        current = self.current_node
        target = action.node_id
        if not world.has_node(target):
            raise EnvError(f"unknown node {target} in {world.world_id}")
        if target == current:
            raise EnvError(f"GotoNode({target}) targets the current node")
        if not np.isfinite(world.distances[current, target]):
            raise EnvError(f"node {target} is unreachable from {current}")
        if frontier is not None and target not in frontier \
                and target not in world.neighbors(current):
            raise EnvError(f"node {target} is neither in the frontier nor a neighbor of {current}")

        path = world.shortest_path(current, target)
        for a, b in zip(path, path[1:]):
            self._path_length += world.edge_length(a, b)
            self._visited.append(b)

        if self._n_decisions >= self.max_decisions:
            logger.debug(f"{self._episode.episode_id}: decision cap reached")  # type: ignore
            return self._finish(stopped=False)
        return self.observation()

    def _finish(self, stopped: bool) -> EpisodeResult:
        self._done = True
        return EpisodeResult(
            episode_id=self._episode.episode_id,  # type: ignore
            visited=tuple(self._visited),
            path_length=self._path_length,
            stop_node=self.current_node,
            localization=self._localization,
            n_decisions=self._n_decisions,
            stopped=stopped)
