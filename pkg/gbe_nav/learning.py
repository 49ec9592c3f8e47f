"""Rollouts and training objectives.

Three kinds of trajectories feed the navigation loss:

- ``IL``: the agent executes the ground-truth action and is trained to predict it,
- ``RL``: the agent samples its own action, weighted by the advantage,
- ``GE``: the agent samples its own action and is trained to predict the
  teacher's action at every state it reaches.

Rollouts run without gradient and record a ``DecisionContext`` per step; the
losses replay the decisions with gradient from these snapshots.
"""
import enum
import logging
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch

from gbe_nav import constants
from gbe_nav.env import EpisodeResult, NavEnv, StepObservation
from gbe_nav.experiment import TrainConfig
from gbe_nav.geometry import PolarPoint
from gbe_nav.nn.core import DTYPE, softmax_cross_entropy
from gbe_nav.planner import (
    DecisionContext, PlannerState, ReadoutScope, TeacherRule, ground_truth_action, observe,
    snapshot, teacher_action
)
from gbe_nav.policy import GBEAgent, PolicyOutput
from gbe_nav.worldgen.episodes import EpisodeSpec
from gbe_nav.worldgen.world import World, nearest_target_distance

logger = logging.getLogger(__name__)


class RolloutMode(str, enum.Enum):
    IL = "il"
    RL = "rl"
    GE = "ge"


class StepRecord(NamedTuple):
    context: DecisionContext
    action_index: int
    log_prob: float
    probs: Tuple[float, ...]
    # IL only
    ground_truth_index: Optional[int]
    # GE only
    teacher_index: Optional[int]
    value: float
    localization: PolarPoint


class TrajectoryRecord(NamedTuple):
    mode: RolloutMode
    episode: EpisodeSpec
    tokens: Tuple[int, ...]
    steps: Tuple[StepRecord, ...]
    result: EpisodeResult
    # RL only
    rewards: Optional[Tuple[float, ...]] = None
    returns: Optional[Tuple[float, ...]] = None

    @property
    def advantages(self) -> Tuple[float, ...]:
        if self.returns is None:
            raise ValueError(f"{self.mode.value} trajectory has no returns")
        return tuple(g - step.value for g, step in zip(self.returns, self.steps))


class Rewards(NamedTuple):
    rewards: Tuple[float, ...]
    returns: Tuple[float, ...]


class LossTerms(NamedTuple):
    il: torch.Tensor
    rl: torch.Tensor
    ge: torch.Tensor
    # weighted sum of the three terms above
    nav: torch.Tensor
    loc: torch.Tensor
    critic: torch.Tensor
    entropy: torch.Tensor
    total: torch.Tensor
    n_localized: int

    def as_floats(self) -> dict:
        return {k: float(v) for k, v in self._asdict().items()}


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    return int(rng.choice(len(probs), p=probs / probs.sum()))


def rollout(
    env: NavEnv,
    world: World,
    episode: EpisodeSpec,
    agent: GBEAgent,
    mode: RolloutMode,
    rng: np.random.Generator,
    config: TrainConfig = TrainConfig(),
    teacher_rule: TeacherRule = TeacherRule.NEAREST_TO_TARGET
) -> TrajectoryRecord:
    mode = RolloutMode(mode)
    if not episode.targets_visible:
        raise ValueError(f"{episode.episode_id}: targets are hidden, cannot train on it")
    targets = episode.target_nodes
    scope = ReadoutScope(agent.config.readout_scope)
    state = PlannerState(agent.config.vision_dim)
    steps: List[StepRecord] = []

    with torch.no_grad():
        language = agent.encode_language(episode.instruction.tokens)
        observation = env.reset(world, episode)
        while True:
            assert isinstance(observation, StepObservation)
            observe(state, observation.node_id, observation.feature, observation.neighbors)
            context = snapshot(state, scope)
            output = agent(context, language)
            probs = output.probs.numpy()

            ground_truth_index = teacher_index = None
            if mode == RolloutMode.IL:
                ground_truth_index = context.action_index(ground_truth_action(
                    world.distances, world.shortest_path, targets, context.current_node))
                action_index = ground_truth_index
            else:
                action_index = _sample(probs, rng)
            if mode == RolloutMode.GE:
                if context.candidate_ids or context.current_node in targets:
                    teacher_index = context.action_index(teacher_action(
                        world.distances, context.candidate_ids, targets, context.current_node,
                        teacher_rule))
                else:
                    # every observed node was visited, stop is the only action left
                    teacher_index = 0

            localization = PolarPoint(*(float(v) for v in output.localization))
            steps.append(StepRecord(
                context=context,
                action_index=action_index,
                log_prob=float(torch.log_softmax(output.logits, dim=0)[action_index]),
                probs=tuple(float(p) for p in probs),
                ground_truth_index=ground_truth_index,
                teacher_index=teacher_index,
                value=float(output.value),
                localization=localization))

            observation = env.step(
                context.action(action_index), frontier=set(context.candidate_ids),
                localization=localization)
            if isinstance(observation, EpisodeResult):
                break

    trajectory = TrajectoryRecord(
        mode, episode, tuple(episode.instruction.tokens), tuple(steps), observation)
    if mode == RolloutMode.RL:
        rewards = compute_rewards(trajectory, world, config.gamma, config.success_radius)
        trajectory = trajectory._replace(rewards=rewards.rewards, returns=rewards.returns)
    return trajectory


def discounted_returns(rewards: Sequence[float], gamma: float) -> Tuple[float, ...]:
    returns = []
    running = 0.0
    for reward in reversed(rewards):
        running = reward + gamma * running
        returns.append(running)
    return tuple(reversed(returns))


def compute_rewards(
    trajectory: TrajectoryRecord,
    world: World,
    gamma: float,
    success_radius: float = constants.SUCCESS_RADIUS_M,
    success_bonus: float = constants.SUCCESS_BONUS
) -> Rewards:
    """Per-step decrease of the distance to the nearest target.

    The last step also gets ``success_bonus`` when the episode ends within
    ``success_radius`` of a target.
    """
    targets = trajectory.episode.target_nodes
    positions = [step.context.current_node for step in trajectory.steps]
    positions.append(trajectory.result.stop_node)
    distances = [nearest_target_distance(world, node, targets) for node in positions]
    rewards = [distances[t] - distances[t + 1] for t in range(len(trajectory.steps))]
    if rewards and distances[-1] < success_radius:
        rewards[-1] += success_bonus
    return Rewards(tuple(rewards), discounted_returns(rewards, gamma))


def replay(agent: GBEAgent, trajectory: TrajectoryRecord) -> List[PolicyOutput]:
    """Recompute every decision of ``trajectory`` with gradient."""
    language = agent.encode_language(trajectory.tokens)
    return [agent(step.context, language) for step in trajectory.steps]


def trajectory_debug(agent: GBEAgent, trajectory: TrajectoryRecord) -> Dict[str, Any]:
    """JSON-ready dump of a trajectory: the graph at every step and the policy inputs.

    ``vision_input`` and ``language_input`` are the features the agent
    actually consumed, after the zero-vision and zero-language switches.
    """
    with torch.no_grad():
        language = agent.encode_language(trajectory.tokens).states.tolist()
        steps = [
            {**step.context.to_dict(),
             "action": step.action_index,
             "probs": list(step.probs),
             "vision_input": agent.vision_input(step.context.features).tolist()}
            for step in trajectory.steps
        ]
    return {
        "episode_id": trajectory.episode.episode_id,
        "mode": trajectory.mode.value,
        "tokens": list(trajectory.tokens),
        "language_input": language,
        "steps": steps,
        "stop_node": int(trajectory.result.stop_node),
        "stopped": trajectory.result.stopped,
    }


def _zero() -> torch.Tensor:
    return torch.zeros((), dtype=DTYPE)


def _imitation_term(
    replayed: Iterable[Tuple[TrajectoryRecord, List[PolicyOutput]]],
    label_field: str
) -> torch.Tensor:
    loss = _zero()
    for trajectory, outputs in replayed:
        for step, output in zip(trajectory.steps, outputs):
            label = getattr(step, label_field)
            if label is None:
                raise ValueError(
                    f"{trajectory.mode.value} trajectory step has no {label_field}")
            loss = loss + softmax_cross_entropy(output.logits, label)
    return loss


def _policy_gradient_term(
    replayed: Iterable[Tuple[TrajectoryRecord, List[PolicyOutput]]]
) -> torch.Tensor:
    loss = _zero()
    for trajectory, outputs in replayed:
        for step, output, advantage in zip(trajectory.steps, outputs, trajectory.advantages):
            loss = loss + advantage * softmax_cross_entropy(output.logits, step.action_index)
    return loss


def loc_loss(predictions: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean over items of the squared heading and elevation errors."""
    if predictions.shape != labels.shape:
        raise ValueError(f"shape mismatch: {tuple(predictions.shape)} vs {tuple(labels.shape)}")
    if predictions.shape[0] == 0:
        return _zero()
    return ((predictions - labels) ** 2).sum(dim=1).mean()


def localization_targets(
    replayed: Iterable[Tuple[TrajectoryRecord, List[PolicyOutput]]],
    worlds: dict,
    success_radius: float = constants.SUCCESS_RADIUS_M
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Predictions and labels of the trajectories stopped near a target."""
    predictions, labels = [], []
    for trajectory, outputs in replayed:
        result = trajectory.result
        if not result.stopped or not outputs:
            continue
        world = worlds[trajectory.episode.world_id]
        targets = trajectory.episode.target_nodes
        nearest = min(targets, key=lambda t: (float(world.distances[result.stop_node, t]), t))
        if world.distances[result.stop_node, nearest] >= success_radius:
            continue
        label = trajectory.episode.label_at(nearest)
        predictions.append(outputs[-1].localization)
        labels.append(torch.tensor([label.heading, label.elevation], dtype=DTYPE))
    if not predictions:
        return torch.zeros((0, 2), dtype=DTYPE), torch.zeros((0, 2), dtype=DTYPE)
    return torch.stack(predictions), torch.stack(labels)


def _check_modes(trajectories: Sequence[TrajectoryRecord], mode: RolloutMode) -> None:
    for trajectory in trajectories:
        if trajectory.mode != mode:
            raise ValueError(
                f"{trajectory.mode.value} trajectory passed as a {mode.value} trajectory")


def compute_losses(
    agent: GBEAgent,
    il: Sequence[TrajectoryRecord],
    rl: Sequence[TrajectoryRecord],
    ge: Sequence[TrajectoryRecord],
    config: TrainConfig,
    worlds: Optional[dict] = None
) -> LossTerms:
    """Every training term, from one replay of each trajectory.

    Localization is only computed when ``worlds`` (world id to World) is given.
    """
    _check_modes(il, RolloutMode.IL)
    _check_modes(rl, RolloutMode.RL)
    _check_modes(ge, RolloutMode.GE)
    il_replayed = [(t, replay(agent, t)) for t in il]
    rl_replayed = [(t, replay(agent, t)) for t in rl]
    ge_replayed = [(t, replay(agent, t)) for t in ge]

    il_term = _imitation_term(il_replayed, "ground_truth_index")
    rl_term = _policy_gradient_term(rl_replayed)
    ge_term = _imitation_term(ge_replayed, "teacher_index")
    nav = config.lambda_il * il_term + config.lambda_rl * rl_term + config.lambda_ge * ge_term

    critic = _zero()
    entropy = _zero()
    for trajectory, outputs in rl_replayed:
        for g, output in zip(trajectory.returns, outputs):  # type: ignore
            critic = critic + (g - output.value) ** 2
            entropy = entropy - (output.probs * torch.log_softmax(output.logits, dim=0)).sum()
    critic = config.critic_weight * critic
    entropy = -config.entropy_coef * entropy

    if worlds is not None:
        predictions, labels = localization_targets(
            il_replayed + rl_replayed + ge_replayed, worlds, config.success_radius)
    else:
        predictions = labels = torch.zeros((0, 2), dtype=DTYPE)
    loc = loc_loss(predictions, labels)

    return LossTerms(
        il=il_term, rl=rl_term, ge=ge_term, nav=nav, loc=loc, critic=critic,
        entropy=entropy, total=nav + loc + critic + entropy, n_localized=predictions.shape[0])


def nav_loss(
    agent: GBEAgent,
    il: Sequence[TrajectoryRecord],
    rl: Sequence[TrajectoryRecord],
    ge: Sequence[TrajectoryRecord],
    config: TrainConfig
) -> torch.Tensor:
    """lambda_il * IL + lambda_rl * RL + lambda_ge * GE, advantages held constant."""
    return compute_losses(agent, il, rl, ge, config).nav
