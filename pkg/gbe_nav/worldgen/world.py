"""Procedurally generated houses: a metric navigation graph split into
regions, with objects that are visible from a few nodes each."""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, NamedTuple, Tuple

import networkx as nx
import numpy as np

from gbe_nav import constants
from gbe_nav.experiment import WorldConfig, check_world_config
from gbe_nav.geometry import (
    CameraSpec, PolarExtent, PolarPoint, annotate_extent, polar_to_pixel,
    wrap_heading
)
from gbe_nav.worldgen import vocabulary

logger = logging.getLogger(__name__)

CAMERA_HEIGHT_M = 1.5
# annotation views are taken every 30 degrees
VIEW_STEP = math.pi / 6


class WorldGenerationError(Exception):
    """No connected layout could be sampled for the requested config."""


class NodeSpec(NamedTuple):
    node_id: int
    position: Tuple[float, float]
    region_id: int
    feature: Tuple[float, ...]


class EdgeSpec(NamedTuple):
    a: int
    b: int
    length: float


class RegionSpec(NamedTuple):
    region_id: int
    region_type: str
    # adjacent regions, sorted
    neighbors: Tuple[int, ...]


class Relation(NamedTuple):
    object_id: int
    relation: str


class ObjectSpec(NamedTuple):
    object_id: int
    class_token: str
    # color, size, shape
    attributes: Tuple[str, str, str]
    relations: Tuple[Relation, ...]
    # (node id, polar extent of the object seen from that node), sorted by node id
    home_nodes: Tuple[Tuple[int, PolarExtent], ...]
    region_id: int
    position: Tuple[float, float]
    height: float

    @property
    def home_node_ids(self) -> Tuple[int, ...]:
        return tuple(n for n, _ in self.home_nodes)

    def extent_at(self, node_id: int) -> PolarExtent:
        for n, extent in self.home_nodes:
            if n == node_id:
                return extent
        raise KeyError(f"object {self.object_id} is not visible from node {node_id}")


@dataclass(frozen=True)
class World:
    world_id: str
    nodes: Tuple[NodeSpec, ...]
    edges: Tuple[EdgeSpec, ...]
    objects: Tuple[ObjectSpec, ...]
    regions: Tuple[RegionSpec, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def has_node(self, node_id: int) -> bool:
        return 0 <= node_id < len(self.nodes)

    def position(self, node_id: int) -> np.ndarray:
        return np.asarray(self.nodes[node_id].position)

    @cached_property
    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(len(self.nodes)))
        graph.add_weighted_edges_from(
            ((e.a, e.b, e.length) for e in self.edges), weight="length")
        return graph

    @cached_property
    def features(self) -> np.ndarray:
        return np.asarray([n.feature for n in self.nodes], dtype=np.float64)

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs Dijkstra distances, exactly symmetric."""
        n = len(self.nodes)
        dist = np.full((n, n), np.inf)
        for source in range(n):
            lengths = nx.single_source_dijkstra_path_length(
                self.graph, source, weight="length")
            for target, length in lengths.items():
                if target >= source:
                    dist[source, target] = length
                    dist[target, source] = length
        return dist

    def neighbors(self, node_id: int) -> List[int]:
        return sorted(self.graph.neighbors(node_id))

    def edge_length(self, a: int, b: int) -> float:
        return self.graph.edges[a, b]["length"]

    def shortest_path(self, a: int, b: int) -> List[int]:
        """Node sequence of a shortest path, consistent with ``distances``."""
        if a <= b:
            return nx.dijkstra_path(self.graph, a, b, weight="length")
        return list(reversed(nx.dijkstra_path(self.graph, b, a, weight="length")))

    def object(self, object_id: int) -> ObjectSpec:
        return self.objects[object_id]

    def region_type(self, region_id: int) -> str:
        return self.regions[region_id].region_type


class FeatureTables(NamedTuple):
    regions: np.ndarray
    classes: np.ndarray
    colors: np.ndarray
    sizes: np.ndarray
    shapes: np.ndarray


_feature_tables: Dict[int, FeatureTables] = {}


def feature_tables(dim: int) -> FeatureTables:
    """Code vectors of regions/classes/attributes, identical for every world."""
    if dim not in _feature_tables:
        rng = np.random.default_rng([constants.FEATURE_TABLE_SEED, dim])

        def table(tokens: Tuple[str, ...]) -> np.ndarray:
            return rng.standard_normal((len(tokens), dim)) / math.sqrt(dim)

        _feature_tables[dim] = FeatureTables(
            table(vocabulary.REGION_TYPES),
            table(vocabulary.OBJECT_CLASSES),
            table(vocabulary.COLORS),
            table(vocabulary.SIZES),
            table(vocabulary.SHAPES))
    return _feature_tables[dim]


def generate_world(seed: int, config: WorldConfig = WorldConfig()) -> World:
    check_world_config(config)
    rng = np.random.default_rng(seed)
    n = config.node_count

    area = n * config.area_per_node
    width = math.sqrt(area * 4 / 3)
    height = area / width

    for attempt in range(config.max_retries):
        positions = rng.uniform((0.0, 0.0), (width, height), size=(n, 2))
        edges = _geometric_edges(positions, config.connect_radius)
        if _is_connected(n, edges):
            break
        logger.debug(f"seed {seed}: layout {attempt} is not connected, resampling")
    else:
        raise WorldGenerationError(
            f"could not sample a connected {n}-node layout in {config.max_retries} "
            f"attempts (seed={seed}, connect_radius={config.connect_radius})")

    cols, rows, cell_regions = _region_grid(config.region_count, width, height)
    region_of_node = [
        cell_regions[_cell(p, width, height, cols, rows)] for p in positions]
    regions = _regions(rng, config.region_count, cell_regions, cols, rows)

    objects = _objects(rng, config, positions, region_of_node, width, height)

    tables = feature_tables(config.vision_dim)
    features = np.stack([tables.regions[vocabulary.REGION_TYPES.index(
        regions[r].region_type)] for r in region_of_node])
    for obj in objects:
        code = _object_code(tables, obj)
        for node_id in obj.home_node_ids:
            features[node_id] += code
    features += config.feature_noise * rng.standard_normal(features.shape)

    nodes = tuple(
        NodeSpec(i, (float(positions[i, 0]), float(positions[i, 1])),
                 int(region_of_node[i]), tuple(float(v) for v in features[i]))
        for i in range(n))
    world = World(f"house-{seed}", nodes, tuple(edges), tuple(objects), tuple(regions))
    logger.info(f"generated {world.world_id}: {n} nodes, {len(edges)} edges, "
                f"{len(objects)} objects")
    return world


def _geometric_edges(positions: np.ndarray, radius: float) -> List[EdgeSpec]:
    edges = []
    n = len(positions)
    for a in range(n):
        for b in range(a + 1, n):
            length = math.hypot(*(positions[a] - positions[b]))
            if length <= radius:
                edges.append(EdgeSpec(a, b, length))
    return edges


def _is_connected(n: int, edges: List[EdgeSpec]) -> bool:
    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    graph.add_edges_from((e.a, e.b) for e in edges)
    return nx.is_connected(graph)


def _region_grid(
    region_count: int, width: float, height: float
) -> Tuple[int, int, List[int]]:
    cols = math.ceil(math.sqrt(region_count * width / height))
    cols = min(cols, region_count)
    rows = math.ceil(region_count / cols)
    # the last region absorbs the cells left over by the grid
    cell_regions = [min(i, region_count - 1) for i in range(cols * rows)]
    return cols, rows, cell_regions


def _cell(p: np.ndarray, width: float, height: float, cols: int, rows: int) -> int:
    c = min(int(p[0] / width * cols), cols - 1)
    r = min(int(p[1] / height * rows), rows - 1)
    return r * cols + c


def _regions(
    rng: np.random.Generator,
    region_count: int,
    cell_regions: List[int],
    cols: int,
    rows: int
) -> List[RegionSpec]:
    types = rng.choice(len(vocabulary.REGION_TYPES), size=region_count)
    adjacency: Dict[int, set] = {r: set() for r in range(region_count)}
    for r in range(rows):
        for c in range(cols):
            here = cell_regions[r * cols + c]
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < rows and cc < cols:
                    there = cell_regions[rr * cols + cc]
                    if there != here:
                        adjacency[here].add(there)
                        adjacency[there].add(here)
    return [
        RegionSpec(r, vocabulary.REGION_TYPES[types[r]], tuple(sorted(adjacency[r])))
        for r in range(region_count)]


def _objects(
    rng: np.random.Generator,
    config: WorldConfig,
    positions: np.ndarray,
    region_of_node: List[int],
    width: float,
    height: float
) -> List[ObjectSpec]:
    placed = []
    for object_id in range(config.object_count):
        anchor = int(rng.integers(len(positions)))
        position = np.clip(positions[anchor] + rng.uniform(-1.0, 1.0, size=2),
                           (0.0, 0.0), (width, height))
        object_height = float(rng.uniform(0.2, 2.2))
        class_token = vocabulary.OBJECT_CLASSES[rng.integers(len(vocabulary.OBJECT_CLASSES))]
        attributes = (
            vocabulary.COLORS[rng.integers(len(vocabulary.COLORS))],
            vocabulary.SIZES[rng.integers(len(vocabulary.SIZES))],
            vocabulary.SHAPES[rng.integers(len(vocabulary.SHAPES))])
        region_id = region_of_node[anchor]
        homes = [
            node_id for node_id in range(len(positions))
            if region_of_node[node_id] == region_id
            and math.hypot(*(positions[node_id] - position)) <= config.visibility_radius]
        if anchor not in homes:
            homes.append(anchor)
        home_nodes = tuple(
            (node_id, _annotate(positions[node_id], position, object_height, attributes[1]))
            for node_id in sorted(homes))
        placed.append(ObjectSpec(
            object_id, class_token, attributes, (), home_nodes, region_id,
            (float(position[0]), float(position[1])), object_height))
    return [obj._replace(relations=_relations(obj, placed)) for obj in placed]


def _annotate(
    node_position: np.ndarray,
    object_position: np.ndarray,
    object_height: float,
    size: str,
    camera: CameraSpec = CameraSpec()
) -> PolarExtent:
    """Draw the object's box in the view facing it and convert it to polar."""
    dx, dy = object_position - node_position
    distance = max(math.hypot(dx, dy), 0.3)
    heading = math.atan2(dy, dx)
    elevation = math.atan2(object_height - CAMERA_HEIGHT_M, distance)
    view = camera._replace(
        heading=wrap_heading(round(heading / VIEW_STEP) * VIEW_STEP),
        elevation=min(max(round(elevation / VIEW_STEP), -2), 2) * VIEW_STEP)
    cx, cy = polar_to_pixel(PolarPoint(wrap_heading(heading), elevation), view)

    half_angle = math.atan(vocabulary.SIZE_METERS[size] / 2 / distance)
    half_w = (view.width / 2) * math.tan(half_angle) / math.tan(view.hfov / 2)
    half_h = (view.height / 2) * math.tan(half_angle) / math.tan(view.vfov / 2)
    x0, x1 = max(cx - half_w, 0.0), min(cx + half_w, float(view.width))
    y0, y1 = max(cy - half_h, 0.0), min(cy + half_h, float(view.height))
    x1, y1 = max(x1, x0 + 2.0), max(y1, y0 + 2.0)
    if x1 > view.width:
        x0, x1 = view.width - 2.0, float(view.width)
    if y1 > view.height:
        y0, y1 = view.height - 2.0, float(view.height)
    return annotate_extent(((x0, y0), (x1, y0), (x1, y1), (x0, y1)), view)


def _relations(obj: ObjectSpec, objects: List[ObjectSpec]) -> Tuple[Relation, ...]:
    homes = set(obj.home_node_ids)
    candidates = []
    for other in objects:
        if other.object_id == obj.object_id or not homes & set(other.home_node_ids):
            continue
        dx = obj.position[0] - other.position[0]
        dy = obj.position[1] - other.position[1]
        distance = math.hypot(dx, dy)
        if obj.height - other.height > 0.6:
            relation = "above"
        elif other.height - obj.height > 0.6:
            relation = "below"
        elif distance < 1.0:
            relation = "near"
        elif dx < 0:
            relation = "left_of"
        else:
            relation = "right_of"
        candidates.append((distance, other.object_id, relation))
    candidates.sort()
    return tuple(Relation(object_id, relation) for _, object_id, relation in candidates[:2])


def _object_code(tables: FeatureTables, obj: ObjectSpec) -> np.ndarray:
    color, size, shape = obj.attributes
    return (tables.classes[vocabulary.OBJECT_CLASSES.index(obj.class_token)]
            + 0.5 * (tables.colors[vocabulary.COLORS.index(color)]
                     + tables.sizes[vocabulary.SIZES.index(size)]
                     + tables.shapes[vocabulary.SHAPES.index(shape)]))


def nearest_target_distance(world: World, node_id: int, targets: Tuple[int, ...]) -> float:
    return float(min(world.distances[node_id, t] for t in targets))
