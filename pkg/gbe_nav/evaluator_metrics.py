import logging
import sys
import warnings
from typing import List, Dict, Optional, Tuple

from gbe_nav import mlflow
from gbe_nav.metrics import SplitMetrics


MONITORED_METRICS = {
    'SR': 'Success rate',
    'OSR': 'Oracle success rate',
    'SPL': 'SPL',
    'SFPL': 'SFPL',
    'NE': 'Navigation error (m)'
}

logger = logging.getLogger(__name__)


class EvaluatorMetricsLogger():
    """Logs the metrics of each split when they change.

    ``log_thresholds`` maps a metric to a (low, high) range outside of which
    changes are tracked in mlflow but not logged.
    """
    def __init__(
        self,
        split_list: List[str],
        log_thresholds: Dict[str, Tuple[Optional[float], Optional[float]]] = None,
        prefix: str = ""
    ):
        self.last_metrics: Dict[str, Dict[str, Optional[float]]] = {
            split: {metric: None for metric in MONITORED_METRICS}
            for split in split_list
        }
        self.split_list = split_list
        self.prefix = prefix
        if log_thresholds:
            key_set = set(log_thresholds)
            self.log_thresholds = {
                key: (
                    log_thresholds[key][0] if log_thresholds[key][0] else 0,
                    log_thresholds[key][1] if log_thresholds[key][1] else sys.float_info.max
                )
                for key in key_set.intersection(MONITORED_METRICS)
            }
            diff = key_set.difference(MONITORED_METRICS)
            if len(diff) > 0:
                warnings.warn(f"The following evaluation metrics are not monitored: {diff}")
        else:
            self.log_thresholds = dict()

    def log(self, results: Dict[str, SplitMetrics], step: Optional[int] = None):
        for split in self.split_list:
            if split not in results:
                continue
            cur_eval_stats = []
            for key, description in MONITORED_METRICS.items():
                stat = float(getattr(results[split], key))
                if stat != self.last_metrics[split][key]:
                    if key not in self.log_thresholds or\
                            (self.log_thresholds[key][0] <= stat <= self.log_thresholds[key][1]):
                        cur_eval_stats.append(f'{description}: {stat}')
                    self.last_metrics[split][key] = stat
                    mlflow.log_metric(mlflow.format_key(f"{self.prefix}{split}_{key}"), stat, step)
            if len(cur_eval_stats) > 0:
                logger.info(f'Statistics for {split}: {" ".join(cur_eval_stats)}')
