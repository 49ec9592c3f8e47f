"""Ablation runs: train each variant for several seeds and compare them.

``ge``           graph-based exploration term on/off
``modality``     vision and language inputs, each on/off
``granularity``  instruction segments, from object name only to the full instruction
``gap``          seen-instruction vs unseen-house success of the full model
"""
import logging
import math
import os
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence

import pyarrow as pa
from pyarrow import csv

from gbe_nav.experiment import ModelConfig, TrainConfig
from gbe_nav.tasks.evaluator import ModelPolicy, evaluate_splits
from gbe_nav.tasks.trainer import train
from gbe_nav.worldgen.episodes import Dataset, with_granularity
from gbe_nav.worldgen.instructions import FULL, REWRITTEN

logger = logging.getLogger(__name__)

ABLATIONS = ("ge", "modality", "granularity", "gap")
EVAL_SPLITS = ("val_seen_instruction", "val_unseen_house")
METRICS = ("NE", "OSR", "SR", "SPL", "SFPL")
MEAN = "mean"


class Variant(NamedTuple):
    name: str
    train_config: TrainConfig
    model_config: ModelConfig
    # None keeps the dataset instructions
    granularity: Optional[FrozenSet[int]] = None


class AblationReport(NamedTuple):
    kind: str
    # one row per (variant, seed, split), then per (variant, split) means
    rows: List[Dict[str, object]]
    # variant -> split -> metric -> mean over seeds
    means: Dict[str, Dict[str, Dict[str, float]]]
    checks: Dict[str, bool]


def variants(kind: str, train_config: TrainConfig, model_config: ModelConfig) -> List[Variant]:
    if kind == "ge":
        return [Variant("gbe", train_config, model_config),
                Variant("gbe_without_ge", train_config._replace(lambda_ge=0.0), model_config)]
    if kind == "modality":
        return [
            Variant("both", train_config, model_config),
            Variant("vision_only", train_config, model_config._replace(zero_language=True)),
            Variant("language_only", train_config, model_config._replace(zero_vision=True)),
            Variant("none", train_config,
                    model_config._replace(zero_vision=True, zero_language=True)),
        ]
    if kind == "granularity":
        levels = [frozenset({1}), frozenset({1, 2}), frozenset({1, 2, 3}), FULL, REWRITTEN]
        return [Variant("+".join(str(level) for level in sorted(g)), train_config, model_config, g)
                for g in levels]
    if kind == "gap":
        return [Variant("gbe", train_config, model_config)]
    raise ValueError(f"unknown ablation {kind!r}, expected one of {ABLATIONS}")


def _mean(values: Sequence[float]) -> float:
    values = [v for v in values if not math.isnan(v)]
    return math.fsum(values) / len(values) if values else math.nan


def directional_checks(
    kind: str, means: Dict[str, Dict[str, Dict[str, float]]]
) -> Dict[str, bool]:
    """The orderings the ablation is expected to show, evaluated on ``means``."""
    unseen = "val_unseen_house"
    if kind == "ge":
        return {"ge_spl_not_worse":
                means["gbe"][unseen]["SPL"] >= means["gbe_without_ge"][unseen]["SPL"]}
    if kind == "modality":
        sr = {name: means[name][unseen]["SR"] for name in means}
        return {
            "both_over_vision": sr["both"] > sr["vision_only"],
            "vision_over_language": sr["vision_only"] > sr["language_only"],
            "language_not_below_none": sr["language_only"] >= sr["none"],
        }
    if kind == "granularity":
        return {"full_sfpl_not_worse":
                means["1+2+3+4"][unseen]["SFPL"] >= means["1"][unseen]["SFPL"]}
    if kind == "gap":
        seen = means["gbe"]["val_seen_instruction"]["SR"]
        return {"seen_instruction_sr_at_least_80": seen >= 0.8,
                "gap_at_least_20_points": seen - means["gbe"][unseen]["SR"] >= 0.2}
    raise ValueError(f"unknown ablation {kind!r}")


def run_ablation(
    kind: str,
    dataset: Dataset,
    seeds: Sequence[int],
    train_config: TrainConfig = TrainConfig(),
    model_config: ModelConfig = ModelConfig(),
    splits: Sequence[str] = EVAL_SPLITS,
    output_dir: Optional[str] = None,
    n_threads: int = 1
) -> AblationReport:
    rows: List[Dict[str, object]] = []
    means: Dict[str, Dict[str, Dict[str, float]]] = {}
    for variant in variants(kind, train_config, model_config):
        train_episodes = dataset.splits["train"]
        eval_splits = {split: dataset.splits[split] for split in splits}
        if variant.granularity is not None:
            train_episodes = with_granularity(train_episodes, dataset.worlds, variant.granularity)
            eval_splits = {split: with_granularity(episodes, dataset.worlds, variant.granularity)
                           for split, episodes in eval_splits.items()}

        per_seed: Dict[str, List[Dict[str, float]]] = {split: [] for split in splits}
        for seed in seeds:
            logger.info(f"ablation {kind}: variant {variant.name}, seed {seed}")
            result = train(dataset.worlds, train_episodes,
                           variant.train_config._replace(seed=seed, eval_every=0),
                           variant.model_config)
            result.agent.eval()
            summaries, _ = evaluate_splits(
                dataset.worlds, eval_splits, lambda: ModelPolicy(result.agent),
                variant.train_config.max_decisions, variant.train_config.success_radius,
                n_threads)
            for split, summary in summaries.items():
                values = {metric: float(getattr(summary, metric)) for metric in METRICS}
                per_seed[split].append(values)
                rows.append({"ablation": kind, "variant": variant.name, "seed": str(seed),
                             "split": split, **values})

        means[variant.name] = {
            split: {metric: _mean([v[metric] for v in per_seed[split]]) for metric in METRICS}
            for split in splits
        }
        for split in splits:
            rows.append({"ablation": kind, "variant": variant.name, "seed": MEAN,
                         "split": split, **means[variant.name][split]})

    checks = directional_checks(kind, means) if set(EVAL_SPLITS) <= set(splits) else {}
    for name, ok in checks.items():
        logger.info(f"ablation {kind}: {name}: {'OK' if ok else 'KO'}")
    if output_dir:
        write_ablation_csv(os.path.join(output_dir, f"ablation_{kind}.csv"), rows)
    return AblationReport(kind, rows, means, checks)


def write_ablation_csv(path: str, rows: Sequence[Dict[str, object]]) -> str:
    columns = ["ablation", "variant", "seed", "split", *METRICS]
    csv.write_csv(pa.Table.from_pydict({c: [row[c] for row in rows] for c in columns}), path)
    return path
