import numpy as np
import pytest
import torch

from gbe_nav.env import STOP, GotoNode
from gbe_nav.experiment import WorldConfig
from gbe_nav.nn.core import grad_check
from gbe_nav.planner import (
    GraphConvolution, PlannerError, PlannerState, ReadoutScope, TeacherRule,
    ground_truth_action, node_feature, normalized_adjacency, observe, propagate, readout,
    snapshot, teacher_action
)
from gbe_nav.worldgen.world import generate_world


def _f(*values):
    return np.array(values, dtype=np.float64)


def test_observe_tracks_visits_and_frontier():
    state = PlannerState(dim=2)
    observe(state, 1, _f(1, 1), [(0, _f(0, 0)), (2, _f(2, 2))])
    assert state.visited == {1}
    assert state.frontier == {0, 2}
    assert state.edges == {(0, 1), (1, 2)}
    assert state.node_ids == [0, 1, 2]

    observe(state, 0, _f(0, 1), [(1, _f(1, 0))])
    assert state.visited == {0, 1}
    assert state.frontier == {2}
    assert state.current == 0
    assert state.last_observed == (1,)


def test_node_feature_averages_observations_until_visited():
    state = PlannerState(dim=2)
    observe(state, 0, _f(0, 0), [(2, _f(1, 3))])
    observe(state, 1, _f(0, 0), [(2, _f(3, 5))])
    np.testing.assert_allclose(node_feature(state, 2), [2.0, 4.0])
    observe(state, 2, _f(9, 9), [])
    np.testing.assert_array_equal(node_feature(state, 2), [9.0, 9.0])
    with pytest.raises(PlannerError):
        node_feature(state, 7)


def test_observe_rejects_bad_feature_shapes():
    state = PlannerState(dim=3)
    with pytest.raises(PlannerError):
        observe(state, 0, _f(1, 2), [])
    with pytest.raises(PlannerError):
        observe(state, 0, _f(1, 2, 3), [(1, _f(1))])


def _two_step_state():
    state = PlannerState(dim=2)
    observe(state, 0, _f(0, 0), [(1, _f(1, 0)), (3, _f(3, 0))])
    # standing on 1, only 2 is seen; the edge to 0 is still in the graph
    observe(state, 1, _f(1, 1), [(2, _f(2, 0))])
    return state


def test_snapshot_readout_scopes():
    state = _two_step_state()
    graph = snapshot(state, ReadoutScope.GRAPH)
    assert graph.node_ids == (0, 1, 2, 3)
    assert graph.current_node == 1
    assert graph.readout_index == (1, 0, 2)
    assert graph.candidate_ids == (2, 3)
    assert graph.candidate_index == (2, 3)
    assert graph.edge_index == ((0, 1), (0, 3), (1, 2))

    observed = snapshot(state, ReadoutScope.OBSERVED)
    assert observed.readout_index == (1, 2)


def test_snapshot_is_immutable_under_later_observations():
    state = _two_step_state()
    context = snapshot(state)
    observe(state, 2, _f(5, 5), [(4, _f(4, 4))])
    assert context.node_ids == (0, 1, 2, 3)
    np.testing.assert_array_equal(context.features[2], [2.0, 0.0])


def test_snapshot_actions():
    context = snapshot(_two_step_state())
    assert context.n_actions == 3
    assert context.action(0) == STOP
    assert context.action(1) == GotoNode(2)
    assert context.action(2) == GotoNode(3)
    for index in range(context.n_actions):
        assert context.action_index(context.action(index)) == index
    with pytest.raises(PlannerError):
        context.action_index(GotoNode(0))
    dumped = context.to_dict()
    assert dumped["frontier"] == [2, 3]
    assert dumped["visited"] == [0, 1]
    assert dumped["current"] == context.current_node


def test_snapshot_before_observing():
    with pytest.raises(PlannerError):
        snapshot(PlannerState(dim=2))


def test_normalized_adjacency():
    np.testing.assert_allclose(normalized_adjacency(1, []).numpy(), [[1.0]])
    np.testing.assert_allclose(normalized_adjacency(2, [(0, 1)]).numpy(), np.full((2, 2), 0.5))
    chain = normalized_adjacency(3, [(0, 1), (1, 2)]).numpy()
    np.testing.assert_allclose(chain, chain.T)
    assert chain[0, 2] == 0.0
    assert chain[0, 1] == pytest.approx(1 / np.sqrt(6))


def _gcn(dim, layers, seed=0):
    torch.manual_seed(seed)
    return GraphConvolution(dim, layers).to(torch.float64)


def test_gcn_matches_dense_computation():
    gcn = _gcn(3, 2)
    m = torch.randn(4, 3, dtype=torch.float64)
    edges = [(0, 1), (1, 2), (0, 3)]
    a = np.eye(4)
    for i, j in edges:
        a[i, j] = a[j, i] = 1.0
    d = np.diag(a.sum(axis=1) ** -0.5)
    a_hat = d @ a @ d

    expected = m.numpy()
    for layer in gcn.weights:
        expected = np.tanh(a_hat @ expected @ layer.weight.detach().numpy().T)
    with torch.no_grad():
        computed = gcn(m, normalized_adjacency(4, edges)).numpy()
    np.testing.assert_allclose(computed, expected, atol=1e-12)


def test_gcn_on_a_single_node():
    gcn = _gcn(2, 1)
    m = torch.tensor([[0.3, -0.2]], dtype=torch.float64)
    with torch.no_grad():
        out = gcn(m, normalized_adjacency(1, []))
        expected = torch.tanh(m @ gcn.weights[0].weight.T)
    torch.testing.assert_close(out, expected)


def test_gcn_is_symmetric_under_node_relabeling():
    gcn = _gcn(3, 2)
    m = torch.randn(3, 3, dtype=torch.float64)
    with torch.no_grad():
        out = gcn(m, normalized_adjacency(3, [(0, 1), (1, 2)]))
        # swap nodes 0 and 2
        swapped = gcn(m[[2, 1, 0]], normalized_adjacency(3, [(2, 1), (1, 0)]))
    torch.testing.assert_close(out[[2, 1, 0]], swapped)


def test_gcn_rejects_mismatched_sizes():
    with pytest.raises(PlannerError):
        _gcn(2, 1)(torch.zeros(3, 2, dtype=torch.float64), normalized_adjacency(2, [(0, 1)]))


def test_readout_is_a_mean():
    embeddings = torch.tensor([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    torch.testing.assert_close(readout(embeddings, [0, 1, 2]), torch.tensor([1.0, 1.0]))
    torch.testing.assert_close(readout(embeddings, [0, 2, 1]), readout(embeddings, [0, 1, 2]))
    with pytest.raises(PlannerError):
        readout(embeddings, [0, 5])
    with pytest.raises(PlannerError):
        readout(embeddings, [])


def test_propagate_matches_dense_computation():
    context = snapshot(_two_step_state())
    torch.manual_seed(0)
    encoder = torch.nn.Linear(2, 3).to(torch.float64)
    gcn = _gcn(3, 1)
    with torch.no_grad():
        embeddings = propagate(context, encoder, gcn)

    a = np.eye(4)
    for i, j in context.edge_index:
        a[i, j] = a[j, i] = 1.0
    d = np.diag(a.sum(axis=1) ** -0.5)
    m0 = context.features @ encoder.weight.detach().numpy().T + encoder.bias.detach().numpy()
    expected = np.tanh(d @ a @ d @ m0 @ gcn.weights[0].weight.detach().numpy().T)
    assert embeddings.shape == (4, 3)
    np.testing.assert_allclose(embeddings.numpy(), expected, rtol=1e-10, atol=1e-12)


def test_propagate_gradients_match_finite_differences():
    context = snapshot(_two_step_state())
    torch.manual_seed(1)
    encoder = torch.nn.Linear(2, 3).to(torch.float64)
    gcn = _gcn(3, 2, seed=1)

    def loss():
        return (readout(propagate(context, encoder, gcn), context.readout_index) ** 2).sum()

    params = list(encoder.named_parameters()) + list(gcn.named_parameters())
    assert grad_check(loss, params) < 1e-4


def _line_distances():
    positions = np.array([0.0, 2.0, 4.0, 6.0])
    return np.abs(positions[:, None] - positions[None, :])


def test_teacher_action_on_a_chain():
    d = _line_distances()
    assert teacher_action(d, [1], [3], 0) == GotoNode(1)
    assert teacher_action(d, [0, 2], [3], 1) == GotoNode(2)
    assert teacher_action(d, [2], [3], 3) == STOP


def test_teacher_action_breaks_ties_by_node_id():
    d = _line_distances()
    assert teacher_action(d, [2, 0], [1], 3) == GotoNode(0)
    assert teacher_action(d, [2, 0], [1], 3, TeacherRule.SHORTEST_PATH) == GotoNode(2)


def test_teacher_rules_differ():
    # candidate 1 is next to the target but far away, candidate 2 is on the way
    d = np.zeros((4, 4))
    for (a, b), value in {(0, 1): 10.0, (1, 3): 1.0, (0, 2): 1.0, (2, 3): 5.0,
                          (0, 3): 6.0, (1, 2): 9.0}.items():
        d[a, b] = d[b, a] = value
    assert teacher_action(d, [1, 2], [3], 0, TeacherRule.NEAREST_TO_TARGET) == GotoNode(1)
    assert teacher_action(d, [1, 2], [3], 0, TeacherRule.SHORTEST_PATH) == GotoNode(2)


def test_teacher_action_errors():
    d = _line_distances()
    with pytest.raises(PlannerError):
        teacher_action(d, [1], [], 0)
    with pytest.raises(PlannerError):
        teacher_action(d, [], [3], 0)


@pytest.mark.parametrize("seed", range(5))
def test_teacher_action_against_brute_force(seed):
    world = generate_world(seed, WorldConfig(node_count=30))
    d = world.distances
    targets = world.objects[0].home_node_ids
    for current in range(world.n_nodes):
        if current in targets:
            continue
        candidates = world.neighbors(current)
        nearest = teacher_action(d, candidates, targets, current)
        to_target = [min(d[c, t] for t in targets) for c in candidates]
        assert min(d[nearest.node_id, t] for t in targets) == min(to_target)

        on_path = teacher_action(d, candidates, targets, current, TeacherRule.SHORTEST_PATH)
        best = min(d[current, t] for t in targets)
        through = d[current, on_path.node_id] + min(d[on_path.node_id, t] for t in targets)
        assert through == pytest.approx(best, rel=1e-12)


def test_ground_truth_action(line_world):
    d = line_world.distances
    assert ground_truth_action(d, line_world.shortest_path, [3], 0) == GotoNode(1)
    assert ground_truth_action(d, line_world.shortest_path, [3], 3) == STOP
    assert ground_truth_action(d, line_world.shortest_path, [0, 3], 2) == GotoNode(3)
    # equidistant targets: the lower id wins
    assert ground_truth_action(d, line_world.shortest_path, [2, 0], 1) == GotoNode(0)
