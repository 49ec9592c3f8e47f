import hashlib
import json
import logging
import logging.config
import os
import platform
import sys
from typing import Any, Dict, Iterable, Optional

import numpy as np
import psutil
import torch

from gbe_nav import constants, mlflow

logger = logging.getLogger(__name__)

RUN_MANIFEST = "run_manifest.json"


def setup_logging():
    log_conf_file = os.path.join(os.path.dirname(__file__), "default.log.conf")
    logging.config.fileConfig(log_conf_file, disable_existing_loggers=False)


def add_file_handler(path: str):
    _logger = logging.getLogger("gbe_nav")
    fh = logging.FileHandler(path)
    fh.setLevel(logging.INFO)
    formatter = logging.Formatter("%(asctime)s:%(levelname)s:%(name)s: %(message)s")
    fh.setFormatter(formatter)
    _logger.addHandler(fh)
    logger.info(f"logs will also be written in {os.path.abspath(path)}")


def _log_sys_info() -> None:
    logger.info(f"Python {sys.version}")
    logger.info(f"Pytorch {torch.__version__}")
    logger.info(f"Numpy {np.__version__}")
    memory = psutil.virtual_memory()
    logger.info(f"{platform.node()}: {psutil.cpu_count()} cpus, "
                f"{memory.available / 2 ** 30:.1f}/{memory.total / 2 ** 30:.1f} GiB available")


def get_output_dir(output_dir: Optional[str] = None) -> str:
    """``output_dir``, else $GBE_NAV_OUTPUT_DIR, else the working directory."""
    resolved = output_dir or os.getenv(constants.ENV_OUTPUT_DIR) or os.getcwd()
    os.makedirs(resolved, exist_ok=True)
    return resolved


def content_hash(paths: Iterable[str]) -> str:
    """SHA-256 over the relative paths and bytes of every file under ``paths``."""
    digest = hashlib.sha256()
    for root in sorted(paths):
        files = [root] if os.path.isfile(root) else sorted(
            os.path.join(d, f) for d, _, fs in os.walk(root) for f in fs)
        for path in files:
            digest.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fd:
                digest.update(fd.read())
    return digest.hexdigest()


def to_jsonable(value: Any) -> Any:
    if hasattr(value, "_asdict"):
        return {k: to_jsonable(v) for k, v in value._asdict().items()}
    if isinstance(value, (set, frozenset)):
        return sorted(to_jsonable(v) for v in value)
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    return value


def write_run_manifest(
    output_dir: str,
    config: Any,
    inputs: Iterable[str] = (),
    extra: Optional[Dict[str, Any]] = None
) -> str:
    inputs = [p for p in inputs if p]
    manifest = {
        "config": to_jsonable(config),
        "inputs": sorted(inputs),
        "inputs_sha256": content_hash(inputs) if inputs else None,
        "versions": {"python": platform.python_version(), "torch": torch.__version__,
                     "numpy": np.__version__},
        **to_jsonable(extra or {}),
    }
    path = os.path.join(output_dir, RUN_MANIFEST)
    with open(path, "w") as fd:
        json.dump(manifest, fd, sort_keys=True, indent=1)
    mlflow.log_artifact(path)
    return path
