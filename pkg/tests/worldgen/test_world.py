import math

import networkx as nx
import numpy as np
import pytest

from gbe_nav.experiment import ConfigError, WorldConfig
from gbe_nav.geometry import check_extent, localization_hit
from gbe_nav.worldgen import vocabulary
from gbe_nav.worldgen.world import (
    WorldGenerationError, _object_code, feature_tables, generate_world, nearest_target_distance
)


def _bfs_reaches_all(world):
    seen = {0}
    frontier = [0]
    while frontier:
        node = frontier.pop()
        for n in world.neighbors(node):
            if n not in seen:
                seen.add(n)
                frontier.append(n)
    return len(seen) == world.n_nodes


@pytest.mark.parametrize("seed", range(10))
def test_generated_worlds_are_connected(seed):
    world = generate_world(seed)
    assert world.n_nodes == WorldConfig().node_count
    assert _bfs_reaches_all(world)


def test_same_seed_same_world():
    assert generate_world(7) == generate_world(7)


def test_different_seeds_differ():
    assert generate_world(1).nodes != generate_world(2).nodes


def test_edges_are_metric():
    world = generate_world(3)
    for edge in world.edges:
        assert edge.a < edge.b
        assert edge.length > 0
        assert edge.length == pytest.approx(
            math.dist(world.nodes[edge.a].position, world.nodes[edge.b].position))
        assert edge.length <= WorldConfig().connect_radius


def test_distances_are_symmetric_and_match_networkx():
    world = generate_world(4)
    np.testing.assert_array_equal(world.distances, world.distances.T)
    lengths = dict(nx.all_pairs_dijkstra_path_length(world.graph, weight="length"))
    for a in range(world.n_nodes):
        for b in range(world.n_nodes):
            assert world.distances[a, b] == pytest.approx(lengths[a][b], rel=1e-12)


def test_shortest_path_length_matches_distances():
    world = generate_world(5)
    for a, b in [(0, world.n_nodes - 1), (world.n_nodes - 1, 0), (3, 17)]:
        path = world.shortest_path(a, b)
        assert path[0] == a and path[-1] == b
        length = sum(world.edge_length(u, v) for u, v in zip(path, path[1:]))
        assert length == pytest.approx(world.distances[a, b], rel=1e-12)


def test_objects_have_annotated_home_nodes():
    world = generate_world(6)
    assert len(world.objects) == WorldConfig().object_count
    for obj in world.objects:
        assert obj.home_node_ids
        assert list(obj.home_node_ids) == sorted(obj.home_node_ids)
        assert obj.class_token in vocabulary.OBJECT_CLASSES
        for node_id, extent in obj.home_nodes:
            assert world.nodes[node_id].region_id == obj.region_id
            check_extent(extent)
            assert localization_hit(extent.center, extent)


def test_relations_reference_covisible_objects():
    world = generate_world(8, WorldConfig(node_count=30, object_count=20))
    for obj in world.objects:
        assert len(obj.relations) <= 2
        for relation in obj.relations:
            other = world.object(relation.object_id)
            assert set(obj.home_node_ids) & set(other.home_node_ids)
            assert relation.relation in vocabulary.RELATIONS


def test_regions_are_adjacent_both_ways():
    world = generate_world(9)
    for region in world.regions:
        assert region.region_type in vocabulary.REGION_TYPES
        for other in region.neighbors:
            assert region.region_id in world.regions[other].neighbors


def test_noiseless_features_are_region_plus_object_codes():
    config = WorldConfig(feature_noise=0.0)
    world = generate_world(10, config)
    tables = feature_tables(config.vision_dim)
    for node in world.nodes:
        expected = tables.regions[vocabulary.REGION_TYPES.index(
            world.region_type(node.region_id))].copy()
        for obj in world.objects:
            if node.node_id in obj.home_node_ids:
                expected += _object_code(tables, obj)
        np.testing.assert_allclose(node.feature, expected, atol=1e-12)


def test_feature_tables_are_shared():
    assert feature_tables(32) is feature_tables(32)
    assert feature_tables(8).classes.shape == (len(vocabulary.OBJECT_CLASSES), 8)


def test_nearest_target_distance():
    world = generate_world(11)
    targets = (3, 9)
    assert nearest_target_distance(world, 3, targets) == 0.0
    assert nearest_target_distance(world, 0, targets) == min(
        world.distances[0, 3], world.distances[0, 9])


def test_unconnectable_layout_raises():
    with pytest.raises(WorldGenerationError):
        generate_world(0, WorldConfig(node_count=20, connect_radius=0.01, max_retries=3))


@pytest.mark.parametrize("config", [
    WorldConfig(node_count=1),
    WorldConfig(object_count=0),
    WorldConfig(region_count=0),
])
def test_invalid_config(config):
    with pytest.raises(ConfigError):
        generate_world(0, config)
