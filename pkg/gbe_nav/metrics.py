import logging
import math
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

from gbe_nav import constants, mlflow
from gbe_nav.env import EpisodeResult
from gbe_nav.geometry import localization_hit
from gbe_nav.worldgen.episodes import EpisodeSpec
from gbe_nav.worldgen.world import World, nearest_target_distance

logger = logging.getLogger(__name__)

ALL_EPISODES = "ALL"
CSV_COLUMNS = ["split", "episode_id", "NE", "OSR", "SR", "SPL", "SFPL", "SFPL_SPLSTYLE"]


class EpisodeEval(NamedTuple):
    episode_id: str
    navigation_error: float
    success: int
    oracle_success: int
    localization_success: int
    # l_nav
    path_length: float
    # l_gt
    shortest_path_length: float

    @property
    def spl(self) -> float:
        return self.success * self.shortest_path_length / max(
            self.path_length, self.shortest_path_length)

    @property
    def sfpl(self) -> float:
        # numerator is l_nav, as printed in the SFPL definition
        denominator = max(self.path_length, self.shortest_path_length)
        return self.success * self.localization_success * self.path_length / denominator

    @property
    def sfpl_splstyle(self) -> float:
        return self.localization_success * self.spl


def navigation_error(result: EpisodeResult, targets: Iterable[int], world: World) -> float:
    return nearest_target_distance(world, result.stop_node, tuple(targets))


def success(
    result: EpisodeResult,
    targets: Iterable[int],
    world: World,
    threshold: float = constants.SUCCESS_RADIUS_M
) -> int:
    return int(navigation_error(result, targets, world) < threshold)


def oracle_success(
    result: EpisodeResult,
    targets: Iterable[int],
    world: World,
    threshold: float = constants.SUCCESS_RADIUS_M
) -> int:
    targets = tuple(targets)
    closest = min(nearest_target_distance(world, node, targets) for node in result.visited)
    return int(closest < threshold)


def localization_success(
    result: EpisodeResult,
    episode: EpisodeSpec,
    world: World,
    threshold: float = constants.SUCCESS_RADIUS_M
) -> int:
    """Hit test of the final prediction against the extent seen from the
    target node nearest to the stop node, only counted on navigation success."""
    if result.localization is None or not success(result, episode.target_nodes, world, threshold):
        return 0
    nearest = min(episode.target_nodes,
                  key=lambda t: (float(world.distances[result.stop_node, t]), t))
    extent = world.object(episode.object_id).extent_at(nearest)
    return int(localization_hit(result.localization, extent))


def evaluate_episode(
    result: EpisodeResult,
    episode: EpisodeSpec,
    world: World,
    threshold: float = constants.SUCCESS_RADIUS_M
) -> EpisodeEval:
    targets = episode.target_nodes
    return EpisodeEval(
        episode_id=episode.episode_id,
        navigation_error=navigation_error(result, targets, world),
        success=success(result, targets, world, threshold),
        oracle_success=oracle_success(result, targets, world, threshold),
        localization_success=localization_success(result, episode, world, threshold),
        path_length=result.path_length,
        shortest_path_length=episode.shortest_path_length)


def _mean(values: List[float]) -> float:
    return math.fsum(values) / len(values) if values else float("nan")


def mean_navigation_error(evals: Sequence[EpisodeEval]) -> float:
    return _mean([e.navigation_error for e in evals])


def success_rate(evals: Sequence[EpisodeEval]) -> float:
    return _mean([e.success for e in evals])


def oracle_success_rate(evals: Sequence[EpisodeEval]) -> float:
    return _mean([e.oracle_success for e in evals])


def spl(evals: Sequence[EpisodeEval]) -> float:
    return _mean([e.spl for e in evals])


def sfpl(evals: Sequence[EpisodeEval]) -> float:
    return _mean([e.sfpl for e in evals])


def sfpl_splstyle(evals: Sequence[EpisodeEval]) -> float:
    return _mean([e.sfpl_splstyle for e in evals])


class SplitMetrics(NamedTuple):
    split: str
    n_episodes: int
    NE: float
    OSR: float
    SR: float
    SPL: float
    SFPL: float
    SFPL_SPLSTYLE: float

    def as_row(self) -> Dict[str, object]:
        row = {"split": self.split, "episode_id": ALL_EPISODES}
        row.update({k: getattr(self, k) for k in CSV_COLUMNS[2:]})
        return row

    def log_mlflow(self, step: Optional[int] = None, prefix: str = "") -> None:
        mlflow.log_metrics({
            mlflow.format_key(f"{prefix}{self.split}/{key}"): getattr(self, key)
            for key in CSV_COLUMNS[2:]
        }, step)


def summarize(split: str, evals: Sequence[EpisodeEval]) -> SplitMetrics:
    return SplitMetrics(
        split=split,
        n_episodes=len(evals),
        NE=mean_navigation_error(evals),
        OSR=oracle_success_rate(evals),
        SR=success_rate(evals),
        SPL=spl(evals),
        SFPL=sfpl(evals),
        SFPL_SPLSTYLE=sfpl_splstyle(evals))


def episode_row(split: str, e: EpisodeEval) -> Dict[str, object]:
    return {
        "split": split, "episode_id": e.episode_id, "NE": e.navigation_error,
        "OSR": float(e.oracle_success), "SR": float(e.success), "SPL": e.spl,
        "SFPL": e.sfpl, "SFPL_SPLSTYLE": e.sfpl_splstyle,
    }
