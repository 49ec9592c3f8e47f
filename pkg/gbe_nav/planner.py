"""The agent's dynamic semantic graph.

The planner keeps a node feature set (what was seen from where), an edge set
(which nodes were observed from which) and a node embedding set propagated
by a graph convolution. Every decision works on an immutable
``DecisionContext`` snapshot, so that a decision can be replayed with
gradients after the rollout.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import (
    Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple
)

import numpy as np
import torch

from gbe_nav.env import STOP, GotoNode, NavAction

logger = logging.getLogger(__name__)


class PlannerError(Exception):
    """Inconsistent planner state."""


class ReadoutScope(str, enum.Enum):
    # current node and its neighbors in the edge set
    GRAPH = "graph"
    # current node and the neighbors observed at this step
    OBSERVED = "observed"


class TeacherRule(str, enum.Enum):
    # candidate closest to a target
    NEAREST_TO_TARGET = "nearest_to_target"
    # candidate on a shortest path from the current node to the nearest target
    SHORTEST_PATH = "shortest_path"


@dataclass
class PlannerState:
    dim: int
    # feature recorded when standing on a node
    visited_features: Dict[int, np.ndarray] = field(default_factory=dict)
    # features recorded when seeing a node as a neighbor
    observations: Dict[int, List[np.ndarray]] = field(default_factory=dict)
    # undirected, stored as (min, max)
    edges: Set[Tuple[int, int]] = field(default_factory=set)
    visited: Set[int] = field(default_factory=set)
    frontier: Set[int] = field(default_factory=set)
    current: Optional[int] = None
    last_observed: Tuple[int, ...] = ()

    @property
    def node_ids(self) -> List[int]:
        return sorted(set(self.visited_features) | set(self.observations))

    def graph_neighbors(self, node_id: int) -> List[int]:
        return sorted({b if a == node_id else a for a, b in self.edges if node_id in (a, b)})


def observe(
    state: PlannerState,
    node_id: int,
    feature: np.ndarray,
    neighbors: Iterable[Tuple[int, np.ndarray]]
) -> PlannerState:
    """Record a visit of ``node_id`` and what it shows of its neighbors."""
    neighbors = list(neighbors)
    for nid, f in [(node_id, feature)] + neighbors:
        if np.shape(f) != (state.dim,):
            raise PlannerError(
                f"feature of node {nid} has shape {np.shape(f)}, expected ({state.dim},)")

    state.visited_features[node_id] = np.asarray(feature, dtype=np.float64)
    state.visited.add(node_id)
    state.frontier.discard(node_id)
    for nid, f in neighbors:
        state.observations.setdefault(nid, []).append(np.asarray(f, dtype=np.float64))
        state.edges.add((min(node_id, nid), max(node_id, nid)))
        if nid not in state.visited:
            state.frontier.add(nid)
    state.current = node_id
    state.last_observed = tuple(sorted(nid for nid, _ in neighbors))
    return state


def node_feature(state: PlannerState, node_id: int) -> np.ndarray:
    if node_id in state.visited_features:
        return state.visited_features[node_id]
    if node_id in state.observations:
        return np.mean(np.stack(state.observations[node_id]), axis=0)
    raise PlannerError(f"node {node_id} was never observed")


class DecisionContext(NamedTuple):
    node_ids: Tuple[int, ...]
    # node_feature of every node, rows in node_ids order
    features: np.ndarray
    # edges as index pairs into node_ids
    edge_index: Tuple[Tuple[int, int], ...]
    current_index: int
    # rows averaged by the readout, current node first
    readout_index: Tuple[int, ...]
    # frontier node ids, sorted; action i + 1 goes to candidate_ids[i]
    candidate_ids: Tuple[int, ...]
    candidate_index: Tuple[int, ...]
    visited_ids: Tuple[int, ...] = ()

    @property
    def current_node(self) -> int:
        return self.node_ids[self.current_index]

    @property
    def n_actions(self) -> int:
        return len(self.candidate_ids) + 1

    def action(self, index: int) -> NavAction:
        return STOP if index == 0 else GotoNode(self.candidate_ids[index - 1])

    def action_index(self, action: NavAction) -> int:
        if isinstance(action, GotoNode):
            if action.node_id not in self.candidate_ids:
                raise PlannerError(f"node {action.node_id} is not a candidate")
            return self.candidate_ids.index(action.node_id) + 1
        return 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "node_ids": list(self.node_ids),
            "edges": [[self.node_ids[i], self.node_ids[j]] for i, j in self.edge_index],
            "current": self.current_node,
            "readout": [self.node_ids[i] for i in self.readout_index],
            "visited": list(self.visited_ids),
            "frontier": list(self.candidate_ids),
            "features": self.features.tolist(),
        }


def snapshot(
    state: PlannerState,
    scope: ReadoutScope = ReadoutScope.GRAPH
) -> DecisionContext:
    if state.current is None:
        raise PlannerError("nothing observed yet")
    node_ids = state.node_ids
    position = {n: i for i, n in enumerate(node_ids)}
    current = state.current
    if ReadoutScope(scope) == ReadoutScope.GRAPH:
        around = state.graph_neighbors(current)
    else:
        around = list(state.last_observed)
    candidates = sorted(state.frontier)
    return DecisionContext(
        node_ids=tuple(node_ids),
        features=np.stack([node_feature(state, n) for n in node_ids]),
        edge_index=tuple(sorted((position[a], position[b]) for a, b in state.edges)),
        current_index=position[current],
        readout_index=(position[current],) + tuple(position[n] for n in around),
        candidate_ids=tuple(candidates),
        candidate_index=tuple(position[n] for n in candidates),
        visited_ids=tuple(sorted(state.visited)))


def normalized_adjacency(
    n_nodes: int,
    edge_index: Iterable[Tuple[int, int]],
    dtype: torch.dtype = torch.float64
) -> torch.Tensor:
    """D^-1/2 (A + I) D^-1/2 of an undirected graph."""
    adjacency = torch.eye(n_nodes, dtype=dtype)
    for i, j in edge_index:
        adjacency[i, j] = 1.0
        adjacency[j, i] = 1.0
    inv_sqrt_degree = adjacency.sum(dim=1).rsqrt()
    return inv_sqrt_degree[:, None] * adjacency * inv_sqrt_degree[None, :]


class GraphConvolution(torch.nn.Module):
    """``layers`` rounds of M <- activation(Â M W_g)."""

    def __init__(
        self,
        dim: int,
        layers: int,
        activation: Callable[[torch.Tensor], torch.Tensor] = torch.tanh
    ):
        super().__init__()
        self.weights = torch.nn.ModuleList(
            [torch.nn.Linear(dim, dim, bias=False) for _ in range(layers)])
        self.activation = activation

    def forward(self, embeddings: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        if embeddings.shape[0] != adjacency.shape[0]:
            raise PlannerError(
                f"{embeddings.shape[0]} embeddings for a {adjacency.shape[0]}-node graph")
        for weight in self.weights:
            embeddings = self.activation(adjacency @ weight(embeddings))
        return embeddings


def propagate(
    context: DecisionContext,
    encoder: Callable[[torch.Tensor], torch.Tensor],
    gcn: GraphConvolution
) -> torch.Tensor:
    """Initialize M from V with ``encoder`` and propagate it over E.

    M is rebuilt at every decision, rows in ``context.node_ids`` order.
    """
    embeddings = encoder(torch.as_tensor(context.features, dtype=torch.float64))
    return gcn(embeddings, normalized_adjacency(len(context.node_ids), context.edge_index))


def readout(embeddings: torch.Tensor, rows: Sequence[int]) -> torch.Tensor:
    """Mean embedding of the current node (first row) and its neighbors."""
    rows = list(rows)
    if not rows:
        raise PlannerError("empty readout")
    out_of_range = [r for r in rows if not 0 <= r < embeddings.shape[0]]
    if out_of_range:
        raise PlannerError(f"no embedding for rows {out_of_range}")
    return embeddings.index_select(0, torch.as_tensor(rows, dtype=torch.long)).mean(dim=0)


def teacher_action(
    distances: np.ndarray,
    candidates: Iterable[int],
    targets: Iterable[int],
    current: int,
    rule: TeacherRule = TeacherRule.NEAREST_TO_TARGET
) -> NavAction:
    """Teacher action from world distances.

    ``NEAREST_TO_TARGET`` picks the candidate minimizing its distance to the
    closest target. ``SHORTEST_PATH`` minimizes the distance from the current
    node through the candidate to the closest target, so following it walks
    a shortest path. Both stop on a target and break ties by node id.
    """
    targets = list(targets)
    if not targets:
        raise PlannerError("the teacher needs at least one target")
    if current in targets:
        return STOP
    candidates = list(candidates)
    if not candidates:
        raise PlannerError(f"no candidate at node {current}, which is not a target")

    def to_target(c: int) -> float:
        return float(min(distances[c, t] for t in targets))

    if TeacherRule(rule) == TeacherRule.NEAREST_TO_TARGET:
        best = min(candidates, key=lambda c: (to_target(c), c))
    else:
        best = min(candidates,
                   key=lambda c: (float(distances[current, c]) + to_target(c), to_target(c), c))
    return GotoNode(best)


def ground_truth_action(
    distances: np.ndarray,
    shortest_path: Callable[[int, int], List[int]],
    targets: Iterable[int],
    current: int
) -> NavAction:
    """First node on a shortest path to the nearest target, Stop on a target."""
    targets = sorted(targets)
    if current in targets:
        return STOP
    nearest = min(targets, key=lambda t: (float(distances[current, t]), t))
    return GotoNode(shortest_path(current, nearest)[1])
