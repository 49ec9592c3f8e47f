import logging
import math
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch

logger = logging.getLogger(__name__)

DTYPE = torch.float64

RMSPROP_ALPHA = 0.99
RMSPROP_EPS = 1e-8


class NonFiniteGradientError(Exception):
    """A gradient holds NaN or infinite entries."""


def fan_in_uniform_(module: torch.nn.Module, generator: Optional[torch.Generator] = None) -> None:
    """Draw every parameter of ``module`` from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    The fan-in of a matrix is its number of columns; vectors use their length.
    """
    with torch.no_grad():
        for _, param in sorted(module.named_parameters()):
            fan_in = param.shape[-1] if param.dim() > 1 else param.shape[0]
            bound = 1.0 / math.sqrt(fan_in)
            param.uniform_(-bound, bound, generator=generator)


def linear(
    x: torch.Tensor,
    weight: torch.Tensor,
    bias: Optional[torch.Tensor] = None
) -> torch.Tensor:
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"cannot apply a {tuple(weight.shape)} weight to input {tuple(x.shape)}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"bias shape {tuple(bias.shape)} does not match {tuple(weight.shape)}")
    return torch.nn.functional.linear(x, weight, bias)


def softmax_cross_entropy(logits: torch.Tensor, label: int) -> torch.Tensor:
    """-log softmax(logits)[label]."""
    if not 0 <= label < logits.shape[-1]:
        raise ValueError(f"label {label} out of range for {logits.shape[-1]} logits")
    return -torch.log_softmax(logits, dim=-1)[label]


class EncodedSequence(NamedTuple):
    # one state per token, (n_tokens, hidden_dim)
    states: torch.Tensor
    # final hidden state, (hidden_dim,)
    pooled: torch.Tensor


class LanguageEncoder(torch.nn.Module):
    """Word embeddings followed by a single-layer GRU."""

    def __init__(self, vocab_size: int, word_dim: int, hidden_dim: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.embedding = torch.nn.Embedding(vocab_size, word_dim)
        self.gru = torch.nn.GRU(word_dim, hidden_dim, batch_first=True)

    def forward(self, tokens: Sequence[int]) -> EncodedSequence:
        if len(tokens) == 0:
            raise ValueError("cannot encode an empty token sequence")
        bad = [t for t in tokens if not 0 <= t < self.vocab_size]
        if bad:
            raise ValueError(f"token ids {bad} out of vocabulary (size {self.vocab_size})")
        ids = torch.as_tensor(list(tokens), dtype=torch.long)
        states, last = self.gru(self.embedding(ids)[None])
        return EncodedSequence(states[0], last[0, 0])


def sequence_encode(tokens: Sequence[int], encoder: LanguageEncoder) -> EncodedSequence:
    return encoder(tokens)


class ParamStore:
    """Trainable tensors of a module and their RMSProp state."""

    def __init__(
        self,
        module: torch.nn.Module,
        learning_rate: float,
        alpha: float = RMSPROP_ALPHA,
        eps: float = RMSPROP_EPS
    ):
        self.module = module
        self.optimizer = torch.optim.RMSprop(
            module.parameters(), lr=learning_rate, alpha=alpha, eps=eps)

    def named_parameters(self) -> List[Tuple[str, torch.nn.Parameter]]:
        return list(self.module.named_parameters())

    def zero_grad(self) -> None:
        self.optimizer.zero_grad(set_to_none=False)

    def second_moment(self, name: str) -> Optional[torch.Tensor]:
        param = dict(self.module.named_parameters())[name]
        state = self.optimizer.state.get(param, {})
        return state.get("square_avg")

    def check_gradients(self) -> None:
        for name, param in self.module.named_parameters():
            if param.grad is not None and not torch.isfinite(param.grad).all():
                n_bad = int((~torch.isfinite(param.grad)).sum())
                raise NonFiniteGradientError(
                    f"gradient of {name} has {n_bad} non-finite entries")


def rmsprop_step(store: ParamStore, learning_rate: float) -> ParamStore:
    """Apply one RMSProp update from the populated gradients, then clear them.

    square_avg <- alpha * square_avg + (1 - alpha) * g^2
    param <- param - lr * g / (sqrt(square_avg) + eps)
    """
    store.check_gradients()
    for group in store.optimizer.param_groups:
        group["lr"] = learning_rate
    store.optimizer.step()
    store.zero_grad()
    return store


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Iterable[Tuple[str, torch.Tensor]],
    eps: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-5
) -> float:
    """Max relative error between autograd and central-difference gradients.

    ``max_entries`` subsamples the entries checked per tensor. The relative
    error of an entry is |a - n| / max(|a|, |n|, floor).
    """
    params = list(params)
    tensors = [p for _, p in params]
    analytic = torch.autograd.grad(loss_fn(), tensors, allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for (name, param), grad in zip(params, analytic):
            grad = torch.zeros_like(param) if grad is None else grad
            flat = param.view(-1)
            entries = np.arange(flat.numel())
            if max_entries is not None and len(entries) > max_entries:
                entries = rng.choice(entries, size=max_entries, replace=False)
            for i in entries:
                original = float(flat[i])
                flat[i] = original + eps
                plus = float(loss_fn())
                flat[i] = original - eps
                minus = float(loss_fn())
                flat[i] = original
                numeric = (plus - minus) / (2 * eps)
                exact = float(grad.view(-1)[i])
                error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
                if error > worst:
                    logger.debug(f"{name}[{i}]: autograd {exact}, numeric {numeric}")
                    worst = error
    return worst
