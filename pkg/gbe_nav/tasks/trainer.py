import json
import logging
import math
import os
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pyarrow as pa
import torch
from pyarrow import csv
from torch.utils.tensorboard import SummaryWriter

from gbe_nav import mlflow
from gbe_nav.env import NavEnv
from gbe_nav.evaluator_metrics import EvaluatorMetricsLogger
from gbe_nav.experiment import (
    ConfigError, ModelConfig, TrainConfig, check_model_config, check_train_config
)
from gbe_nav.learning import (
    RolloutMode, TrajectoryRecord, compute_losses, rollout, trajectory_debug
)
from gbe_nav.nn import model_ckpt
from gbe_nav.nn.core import NonFiniteGradientError, ParamStore, rmsprop_step
from gbe_nav.policy import GBEAgent
from gbe_nav.tasks.evaluator import ModelPolicy, evaluate_splits
from gbe_nav.worldgen.episodes import EpisodeSpec
from gbe_nav.worldgen.world import World

_logger = logging.getLogger(__name__)

LEARNING_CURVE = "learning_curve.csv"
LOSS_COLUMNS = ["L_nav", "L_il", "L_rl", "L_ge", "L_loc", "L_critic", "L_total"]
EVAL_METRICS = ["SR", "SPL", "SFPL"]


class TrainingAborted(Exception):
    """Training produced a non-finite loss."""


class TrainResult(NamedTuple):
    agent: GBEAgent
    store: ParamStore
    curve: List[Dict[str, float]]
    checkpoint: Optional[str]


def _lambda(config: TrainConfig, mode: RolloutMode) -> float:
    return getattr(config, f"lambda_{mode.value}")


def curve_columns(eval_splits: Sequence[str]) -> List[str]:
    return ["iteration"] + LOSS_COLUMNS + [
        f"{split}_{metric}" for split in eval_splits for metric in EVAL_METRICS]


def write_learning_curve(path: str, curve: Sequence[Dict[str, float]], columns: List[str]) -> str:
    table = pa.Table.from_pydict(
        {col: [row.get(col, math.nan) for row in curve] for col in columns})
    csv.write_csv(table, path)
    return path


def build_agent(model_config: ModelConfig, seed: int) -> GBEAgent:
    torch.manual_seed(seed)
    return GBEAgent(model_config).reset_parameters(seed)


def _restore(
    model_dir: str,
    agent: GBEAgent,
    store: ParamStore,
    rng: np.random.Generator,
    model_config: ModelConfig
) -> Tuple[int, List[Dict[str, float]]]:
    checkpoint = model_ckpt.load_latest_ckpt(model_dir, agent, store.optimizer)
    if checkpoint is None:
        return 0, []
    latest = f"iteration {checkpoint['iteration']} of {model_dir}"
    saved_config = ModelConfig(**checkpoint["model_config"])
    if saved_config != model_config:
        raise ConfigError(f"{latest} was trained with {saved_config}, not {model_config}")
    if "rng_state" not in checkpoint:
        raise ConfigError(f"{latest} holds no sampling state, it cannot be resumed")
    rng.bit_generator.state = checkpoint["rng_state"]
    return int(checkpoint["iteration"]), [dict(row) for row in checkpoint.get("curve", [])]


def _append_debug(
    path: str,
    agent: GBEAgent,
    trajectories: Mapping[RolloutMode, Sequence[TrajectoryRecord]]
) -> None:
    with open(path, "a") as fd:
        for mode in RolloutMode:
            for trajectory in trajectories[mode]:
                fd.write(json.dumps(trajectory_debug(agent, trajectory)) + "\n")


def train(
    worlds: Mapping[str, World],
    episodes: Sequence[EpisodeSpec],
    train_config: TrainConfig = TrainConfig(),
    model_config: ModelConfig = ModelConfig(),
    model_dir: Optional[str] = None,
    eval_splits: Optional[Mapping[str, Sequence[EpisodeSpec]]] = None,
    tb_writer: Optional[SummaryWriter] = None,
    resume: bool = False,
    debug_path: Optional[str] = None
) -> TrainResult:
    """Train an agent on ``episodes``.

    Every iteration samples ``batch_size`` episodes, runs one rollout per
    scheduled mode with a non-zero weight on each of them and applies one
    RMSProp step to the sum of the navigation, localization and critic losses.
    Everything is seeded by ``train_config.seed``.

    With ``resume``, training restarts from the latest checkpoint of
    ``model_dir``: parameters, RMSProp state, sampling state and the learning
    curve so far. A resumed run ends with the same checkpoint as an
    uninterrupted one. ``debug_path`` appends one JSON line per rollout with
    the graph and the policy inputs of every step.
    """
    check_train_config(train_config)
    check_model_config(model_config)
    if not episodes:
        raise ValueError("cannot train on an empty episode set")

    agent = build_agent(model_config, train_config.seed)
    store = ParamStore(agent, train_config.learning_rate)
    rng = np.random.default_rng(train_config.seed)
    env = NavEnv(train_config.max_decisions)
    modes = [RolloutMode(m) for m in train_config.mode_schedule
             if _lambda(train_config, RolloutMode(m)) > 0]
    eval_splits = {
        split: list(split_episodes)[:train_config.eval_episodes]
        for split, split_episodes in (eval_splits or {}).items()
    }
    metrics_logger = EvaluatorMetricsLogger(list(eval_splits))
    columns = curve_columns(list(eval_splits))
    _logger.info(f"training on {len(episodes)} episodes, modes {[m.value for m in modes]}, "
                 f"{train_config}")
    mlflow.log_config(train_config, "train")
    mlflow.log_config(model_config, "model")

    curve: List[Dict[str, float]] = []
    start = 0
    if resume and model_dir:
        start, curve = _restore(model_dir, agent, store, rng, model_config)
        if start > train_config.iterations:
            raise ConfigError(
                f"{model_dir} holds iteration {start}, past the {train_config.iterations} "
                "iterations to train")
        _logger.info(f"resuming from iteration {start}")

    def _save(iteration: int, final: bool = False) -> Optional[str]:
        if not model_dir:
            return None
        return model_ckpt.save_ckpt(
            model_dir, agent, store.optimizer, iteration,
            model_config=model_config._asdict(), final=final,
            rng_state=rng.bit_generator.state, curve=list(curve))

    for iteration in range(start, train_config.iterations):
        picks = rng.integers(len(episodes), size=train_config.batch_size)
        batch = [episodes[int(i)] for i in picks]
        trajectories: Dict[RolloutMode, List[TrajectoryRecord]] = {m: [] for m in RolloutMode}
        for episode in batch:
            for mode in modes:
                trajectories[mode].append(rollout(
                    env, worlds[episode.world_id], episode, agent, mode, rng, train_config))
        if debug_path:
            _append_debug(debug_path, agent, trajectories)

        agent.train()
        terms = compute_losses(
            agent, trajectories[RolloutMode.IL], trajectories[RolloutMode.RL],
            trajectories[RolloutMode.GE], train_config, worlds)
        if not torch.isfinite(terms.total):
            _logger.error(f"non-finite loss at iteration {iteration}: {terms.as_floats()}")
            raise TrainingAborted(f"non-finite loss at iteration {iteration}")
        store.zero_grad()
        terms.total.backward()
        try:
            rmsprop_step(store, train_config.learning_rate)
        except NonFiniteGradientError:
            _logger.error(f"non-finite gradient at iteration {iteration}")
            raise

        row = {"iteration": float(iteration), "L_nav": float(terms.nav), "L_il": float(terms.il),
               "L_rl": float(terms.rl), "L_ge": float(terms.ge), "L_loc": float(terms.loc),
               "L_critic": float(terms.critic), "L_total": float(terms.total)}

        if eval_splits and train_config.eval_every \
                and (iteration + 1) % train_config.eval_every == 0:
            agent.eval()
            summaries, _ = evaluate_splits(
                worlds, eval_splits, lambda: ModelPolicy(agent), train_config.max_decisions,
                train_config.success_radius)
            for split, summary in summaries.items():
                for metric in EVAL_METRICS:
                    row[f"{split}_{metric}"] = getattr(summary, metric)
            metrics_logger.log(summaries, step=iteration)

        curve.append(row)
        if tb_writer:
            for key, value in row.items():
                if key != "iteration" and not math.isnan(value):
                    tb_writer.add_scalar(key, value, iteration)
        mlflow.log_metrics({k: v for k, v in row.items() if k in LOSS_COLUMNS}, step=iteration)
        if iteration % 50 == 0:
            _logger.info(f"iteration {iteration}: L_total={row['L_total']:.4f} "
                         f"L_nav={row['L_nav']:.4f} L_loc={row['L_loc']:.4f}")

        if model_dir and train_config.checkpoint_every \
                and (iteration + 1) % train_config.checkpoint_every == 0 \
                and iteration + 1 < train_config.iterations:
            _save(iteration + 1)

    checkpoint = _save(train_config.iterations, final=True)
    if model_dir:
        write_learning_curve(os.path.join(model_dir, LEARNING_CURVE), curve, columns)
    _logger.info("Done training")
    return TrainResult(agent, store, curve, checkpoint)
