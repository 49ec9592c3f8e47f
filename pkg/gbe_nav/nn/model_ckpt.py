import hashlib
import io
import os
import re
import logging
from typing import Optional, Dict, Any, Tuple

import torch
from cluster_pack import filesystem


_logger = logging.getLogger(__name__)

CKPT_PATTERN = r".*model_(\d+).pt"


def list_ckpts(model_dir: str) -> Dict[int, str]:
    """Checkpoints of ``model_dir`` by iteration."""
    ckpts = {}
    resolved_fs, _ = filesystem.resolve_filesystem_and_path(model_dir)
    if resolved_fs.exists(model_dir):
        for p in resolved_fs.ls(model_dir):
            groups = re.match(CKPT_PATTERN, p)
            if groups:
                ckpts[int(groups.group(1))] = groups.group(0)
    return ckpts


def find_latest_ckpt(model_dir: str) -> Optional[str]:
    ckpts = list_ckpts(model_dir)
    return ckpts[max(ckpts)] if ckpts else None


def read_ckpt(model_ckpt_path: str) -> Dict[str, Any]:
    resolved_fs, _ = filesystem.resolve_filesystem_and_path(model_ckpt_path)
    _logger.info(f"Loading model checkpoint {model_ckpt_path}")
    with resolved_fs.open(model_ckpt_path, "rb") as fd:
        return torch.load(io.BytesIO(fd.read()), map_location="cpu")


def load_ckpt(
    model_ckpt_path: str, model: torch.nn.Module,
    optimizer: Optional[torch.optim.Optimizer] = None
) -> Dict[str, Any]:
    checkpoint = read_ckpt(model_ckpt_path)
    model.load_state_dict(checkpoint['model'])
    if optimizer is not None:
        optimizer.load_state_dict(checkpoint['optimizer'])
    return checkpoint


def load_latest_ckpt(
    model_dir: str, model: torch.nn.Module,
    optimizer: Optional[torch.optim.Optimizer] = None
) -> Optional[Dict[str, Any]]:
    latest_ckpt = find_latest_ckpt(model_dir)
    if not latest_ckpt:
        _logger.info("No checkpoint to load")
        return None
    return load_ckpt(latest_ckpt, model, optimizer)


def save_ckpt(
    model_dir: str, model: torch.nn.Module, optimizer: torch.optim.Optimizer,
    iteration: int, **kwargs: Any
) -> str:
    state = {
        'model': model.state_dict(),
        'optimizer': optimizer.state_dict(),
        'iteration': iteration,
        **kwargs
    }
    resolved_fs, _ = filesystem.resolve_filesystem_and_path(model_dir)
    if not resolved_fs.exists(model_dir):
        resolved_fs.mkdir(model_dir)
    model_ckpt_path = os.path.join(model_dir, f"model_{iteration}.pt")
    with resolved_fs.open(model_ckpt_path, "wb") as fd:
        torch.save(state, fd)
    _logger.info(f"Saved checkpoint {model_ckpt_path}")
    return model_ckpt_path


def _digest_value(digest: Any, key: str, value: Any) -> None:
    digest.update(key.encode())
    if isinstance(value, torch.Tensor):
        tensor = value.detach().cpu().contiguous()
        digest.update(f"{tensor.dtype}{tuple(tensor.shape)}".encode())
        digest.update(tensor.numpy().tobytes())
    elif isinstance(value, dict):
        for k in sorted(value, key=str):
            _digest_value(digest, f"{key}/{k}", value[k])
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _digest_value(digest, f"{key}/{i}", v)
    else:
        digest.update(repr(value).encode())


def checkpoint_digest(
    checkpoint: Dict[str, Any], keys: Tuple[str, ...] = ('model', 'optimizer')
) -> str:
    """SHA-256 over the named tensors and optimizer state of a checkpoint.

    Two checkpoints with the same digest hold the same values bit for bit,
    whatever the byte layout of the files.
    """
    digest = hashlib.sha256()
    for key in keys:
        _digest_value(digest, key, checkpoint[key])
    return digest.hexdigest()
