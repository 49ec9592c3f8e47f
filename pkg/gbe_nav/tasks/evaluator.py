import logging
import os
import re
import time
from datetime import datetime, timedelta
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import pyarrow as pa
import torch
from pyarrow import csv

from gbe_nav import _internal, constants
from gbe_nav.env import STOP, EpisodeResult, NavAction, NavEnv
from gbe_nav.evaluator_metrics import EvaluatorMetricsLogger
from gbe_nav.experiment import ModelConfig
from gbe_nav.geometry import PolarPoint
from gbe_nav.metrics import (
    CSV_COLUMNS, EpisodeEval, SplitMetrics, episode_row, evaluate_episode, summarize
)
from gbe_nav.nn import model_ckpt
from gbe_nav.planner import (
    DecisionContext, PlannerState, ReadoutScope, TeacherRule, observe, snapshot, teacher_action
)
from gbe_nav.policy import GBEAgent
from gbe_nav.worldgen.episodes import EpisodeSpec
from gbe_nav.worldgen.world import World

logger = logging.getLogger(__name__)

EVAL_FILE_PATTERN = r"eval_(\d+)\.csv"


class NavigationPolicy:
    """Chooses actions from decision contexts, one episode at a time."""

    # policies reading the episode targets are refused on hidden-target splits
    needs_targets = False
    scope = ReadoutScope.GRAPH

    def begin(self, world: World, episode: EpisodeSpec, index: int) -> None:
        pass

    def act(self, context: DecisionContext) -> Tuple[NavAction, Optional[PolarPoint]]:
        raise NotImplementedError()


class ModelPolicy(NavigationPolicy):

    def __init__(self, agent: GBEAgent, greedy: bool = True, seed: int = 0):
        self.agent = agent
        self.greedy = greedy
        self.seed = seed
        self.scope = ReadoutScope(agent.config.readout_scope)
        self._language = None
        self._rng = np.random.default_rng(seed)

    def begin(self, world: World, episode: EpisodeSpec, index: int) -> None:
        self._rng = np.random.default_rng([self.seed, index])
        with torch.no_grad():
            self._language = self.agent.encode_language(episode.instruction.tokens)

    def act(self, context: DecisionContext) -> Tuple[NavAction, Optional[PolarPoint]]:
        with torch.no_grad():
            output = self.agent(context, self._language)
        probs = output.probs.numpy()
        if self.greedy:
            index = int(np.argmax(probs))
        else:
            index = int(self._rng.choice(len(probs), p=probs / probs.sum()))
        return context.action(index), PolarPoint(*(float(v) for v in output.localization))


class RandomPolicy(NavigationPolicy):
    """Uniform over stop and every candidate."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def begin(self, world: World, episode: EpisodeSpec, index: int) -> None:
        self._rng = np.random.default_rng([self.seed, index])

    def act(self, context: DecisionContext) -> Tuple[NavAction, Optional[PolarPoint]]:
        return context.action(int(self._rng.integers(context.n_actions))), None


class TeacherPolicy(NavigationPolicy):
    """Follows the teacher with full knowledge of the targets.

    On stopping it reports the labelled object direction of its node, when
    it has one.
    """

    needs_targets = True

    def __init__(self, rule: TeacherRule = TeacherRule.SHORTEST_PATH):
        self.rule = rule
        self._world: Optional[World] = None
        self._episode: Optional[EpisodeSpec] = None

    def begin(self, world: World, episode: EpisodeSpec, index: int) -> None:
        self._world = world
        self._episode = episode

    def act(self, context: DecisionContext) -> Tuple[NavAction, Optional[PolarPoint]]:
        assert self._world is not None and self._episode is not None
        action = teacher_action(
            self._world.distances, context.candidate_ids, self._episode.target_nodes,
            context.current_node, self.rule)
        if action == STOP and context.current_node in self._episode.target_nodes:
            return action, self._episode.label_at(context.current_node)
        return action, None


def run_episode(
    env: NavEnv,
    world: World,
    episode: EpisodeSpec,
    policy: NavigationPolicy,
    index: int = 0
) -> EpisodeResult:
    state = PlannerState(world.features.shape[1])
    observation = env.reset(world, episode)
    policy.begin(world, episode, index)
    while True:
        observe(state, observation.node_id, observation.feature, observation.neighbors)
        context = snapshot(state, policy.scope)
        action, localization = policy.act(context)
        observation = env.step(action, frontier=set(context.candidate_ids),
                               localization=localization)
        if isinstance(observation, EpisodeResult):
            return observation


def evaluate_episodes(
    worlds: Mapping[str, World],
    episodes: Sequence[EpisodeSpec],
    policy_fn: Callable[[], NavigationPolicy],
    max_decisions: int = constants.MAX_DECISIONS,
    threshold: float = constants.SUCCESS_RADIUS_M,
    n_threads: int = 1
) -> List[Tuple[EpisodeEval, EpisodeResult]]:
    """Run a policy on every episode, ``n_threads`` episodes at a time.

    Each thread owns its environment and policy; results are in episode order
    and do not depend on ``n_threads``.
    """
    if policy_fn().needs_targets:
        hidden = [e.episode_id for e in episodes if not e.targets_visible]
        if hidden:
            raise ValueError(
                f"this policy reads the targets, which are hidden for {len(hidden)} "
                f"episodes (e.g. {hidden[0]})")

    results: List[Optional[Tuple[EpisodeEval, EpisodeResult]]] = [None] * len(episodes)

    def _run(chunk: List[int]) -> None:
        env = NavEnv(max_decisions)
        policy = policy_fn()
        for i in chunk:
            episode = episodes[i]
            world = worlds[episode.world_id]
            result = run_episode(env, world, episode, policy, i)
            results[i] = (evaluate_episode(result, episode, world, threshold), result)

    threads = [
        _internal.MonitoredThread(name=f"evaluator:{n}", target=_run, args=(chunk,), daemon=True)
        for n, chunk in enumerate(_internal.split_evenly(list(range(len(episodes))), n_threads))
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
        if thread.exception is not None:
            raise thread.exception
    return results  # type: ignore


def evaluate_splits(
    worlds: Mapping[str, World],
    splits: Mapping[str, Sequence[EpisodeSpec]],
    policy_fn: Callable[[], NavigationPolicy],
    max_decisions: int = constants.MAX_DECISIONS,
    threshold: float = constants.SUCCESS_RADIUS_M,
    n_threads: int = 1
) -> Tuple[Dict[str, SplitMetrics], List[Dict[str, object]]]:
    """Metrics of every split and the CSV rows (per episode, then one aggregate per split)."""
    summaries = {}
    rows: List[Dict[str, object]] = []
    for split, episodes in splits.items():
        evals = [e for e, _ in evaluate_episodes(
            worlds, episodes, policy_fn, max_decisions, threshold, n_threads)]
        summaries[split] = summarize(split, evals)
        rows += [episode_row(split, e) for e in evals]
        rows.append(summaries[split].as_row())
        logger.info(f"{split}: {summaries[split]}")
    return summaries, rows


def write_metrics_csv(path: str, rows: Sequence[Dict[str, object]]) -> str:
    table = pa.Table.from_pydict({col: [row[col] for row in rows] for col in CSV_COLUMNS})
    csv.write_csv(table, path)
    return path


def read_metrics_csv(path: str) -> Dict[str, list]:
    return csv.read_csv(path).to_pydict()


def load_agent(checkpoint_path: str) -> Tuple[GBEAgent, Dict]:
    checkpoint = model_ckpt.read_ckpt(checkpoint_path)
    agent = GBEAgent(ModelConfig(**checkpoint["model_config"]))
    agent.load_state_dict(checkpoint["model"])
    agent.eval()
    return agent, checkpoint


def stop_cond_reached(stop_cond, timeout_in_secs, timestamp):
    if stop_cond and stop_cond():
        logger.info("Stop condition met")
        return True
    if timeout_in_secs and datetime.now() > (timestamp + timedelta(seconds=timeout_in_secs)):
        logger.info("Stopping evaluation due to timeout")
        return True
    return False


def get_evaluated_checkpoints(eval_dir: str) -> Set[int]:
    if not os.path.isdir(eval_dir):
        return set()
    return {int(m.group(1)) for m in map(lambda f: re.match(EVAL_FILE_PATTERN, f),
                                         os.listdir(eval_dir)) if m}


def get_ckpt_to_eval(model_dir: str, evaluated_checkpoints: Set[int]) -> Dict[int, str]:
    return {
        iteration: path for iteration, path in model_ckpt.list_ckpts(model_dir).items()
        if iteration not in evaluated_checkpoints
    }


def evaluate_checkpoints(
    model_dir: str,
    worlds: Mapping[str, World],
    splits: Mapping[str, Sequence[EpisodeSpec]],
    max_decisions: int = constants.MAX_DECISIONS,
    n_threads: int = 1,
    stop_cond: Optional[Callable[[], bool]] = None,
    timeout_in_secs: Optional[float] = None,
    throttle_secs: float = 30
) -> Dict[int, Dict[str, SplitMetrics]]:
    """Evaluate every checkpoint of ``model_dir`` not evaluated yet.

    Returns when the final checkpoint of a training run has been evaluated,
    when ``stop_cond`` returns True or after ``timeout_in_secs`` without new
    checkpoint.
    """
    eval_dir = os.path.join(model_dir, "eval")
    os.makedirs(eval_dir, exist_ok=True)
    evaluated_checkpoints = get_evaluated_checkpoints(eval_dir)
    metrics_logger = EvaluatorMetricsLogger(list(splits), prefix="eval_")
    all_metrics: Dict[int, Dict[str, SplitMetrics]] = {}
    timestamp = datetime.now()
    latest_checkpoint = False

    while not latest_checkpoint and not stop_cond_reached(stop_cond, timeout_in_secs, timestamp):
        ckpt_to_eval = get_ckpt_to_eval(model_dir, evaluated_checkpoints)

        for iteration in sorted(ckpt_to_eval):
            timestamp = datetime.now()
            logger.info(f"Evaluating checkpoint {ckpt_to_eval[iteration]}")
            agent, checkpoint = load_agent(ckpt_to_eval[iteration])
            summaries, rows = evaluate_splits(
                worlds, splits, lambda: ModelPolicy(agent), max_decisions, n_threads=n_threads)
            write_metrics_csv(os.path.join(eval_dir, f"eval_{iteration}.csv"), rows)
            metrics_logger.log(summaries, step=iteration)
            all_metrics[iteration] = summaries
            evaluated_checkpoints.add(iteration)
            if checkpoint.get("final"):
                logger.info("Last checkpoint evaluated")
                latest_checkpoint = True

        if not latest_checkpoint:
            if len(ckpt_to_eval) == 0:
                logger.info(f"No checkpoint to evaluate; Coming back to sleep "
                            f"({throttle_secs} secs)")
            time.sleep(throttle_secs)
    return all_metrics
