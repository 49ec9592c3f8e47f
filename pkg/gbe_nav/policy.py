"""The navigation agent: encoders, graph planner, cross-modal matching and heads.

One decision maps a ``DecisionContext`` and the encoded instruction to a
distribution over ``|C| + 1`` actions (index 0 is stop), an estimate of the
object direction and a state value.
"""
import logging
from typing import NamedTuple, Optional, Sequence, Tuple

import torch

from gbe_nav.experiment import ModelConfig, check_model_config
from gbe_nav.nn.core import DTYPE, EncodedSequence, LanguageEncoder, fan_in_uniform_
from gbe_nav.planner import DecisionContext, GraphConvolution, propagate, readout
from gbe_nav.worldgen import vocabulary

logger = logging.getLogger(__name__)


class PolicyOutput(NamedTuple):
    # (|C| + 1,), index 0 is stop
    probs: torch.Tensor
    logits: torch.Tensor
    # (heading, elevation)
    localization: torch.Tensor
    value: torch.Tensor
    # attention over instruction tokens
    attention: torch.Tensor


class GBEAgent(torch.nn.Module):

    def __init__(
        self,
        config: ModelConfig = ModelConfig(),
        vocab_size: int = vocabulary.VOCAB_SIZE
    ):
        super().__init__()
        check_model_config(config)
        self.config = config
        d = config.hidden_dim
        self.vision = torch.nn.Linear(config.vision_dim, d)
        self.gcn = GraphConvolution(d, config.gcn_layers)
        self.language = LanguageEncoder(vocab_size, config.word_dim, d)
        self.query = torch.nn.Linear(d, d, bias=False)
        self.cross = torch.nn.Linear(2 * d, d)
        self.nav = torch.nn.Linear(2 * d, 1)
        self.stop_embedding = torch.nn.Parameter(torch.zeros(d))
        self.loc = torch.nn.Linear(d, 2)
        self.critic = torch.nn.Linear(d, 1)
        self.to(DTYPE)

    def reset_parameters(self, seed: int) -> "GBEAgent":
        generator = torch.Generator().manual_seed(seed)
        fan_in_uniform_(self, generator)
        return self

    def vision_input(self, features: torch.Tensor) -> torch.Tensor:
        features = torch.as_tensor(features, dtype=DTYPE)
        return torch.zeros_like(features) if self.config.zero_vision else features

    def encode_vision(self, features: torch.Tensor) -> torch.Tensor:
        """g: raw panoramic features (..., D_v) to (..., D_m)."""
        features = self.vision_input(features)
        if features.shape[-1] != self.config.vision_dim:
            raise ValueError(
                f"vision features have dimension {features.shape[-1]}, "
                f"expected {self.config.vision_dim}")
        return torch.tanh(self.vision(features))

    def encode_language(self, tokens: Sequence[int]) -> EncodedSequence:
        encoded = self.language(tokens)
        if self.config.zero_language:
            return EncodedSequence(torch.zeros_like(encoded.states),
                                   torch.zeros_like(encoded.pooled))
        return encoded

    def cross_modal(
        self, f_g: torch.Tensor, states: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Attend over token states with the graph readout as query."""
        if states.shape[0] == 0:
            raise ValueError("no language state to attend over")
        alpha = torch.softmax(states @ self.query(f_g), dim=0)
        attended = alpha @ states
        return torch.tanh(self.cross(torch.cat([f_g, attended]))), alpha

    def decide(self, fused: torch.Tensor, candidates: torch.Tensor) -> PolicyOutput:
        """Score stop and every candidate; candidates is (|C|, D_m), possibly empty."""
        options = torch.cat([self.stop_embedding[None], candidates])
        paired = torch.cat([fused.expand(options.shape[0], -1), options], dim=1)
        logits = self.nav(paired)[:, 0]
        return PolicyOutput(
            probs=torch.softmax(logits, dim=0),
            logits=logits,
            localization=self.loc(fused),
            value=self.critic(fused)[0],
            attention=torch.empty(0, dtype=DTYPE))

    def graph_readout(self, context: DecisionContext) -> torch.Tensor:
        return readout(propagate(context, self.encode_vision, self.gcn), context.readout_index)

    def forward(
        self,
        context: DecisionContext,
        language: EncodedSequence,
        candidate_features: Optional[torch.Tensor] = None
    ) -> PolicyOutput:
        f_g = self.graph_readout(context)
        fused, alpha = self.cross_modal(f_g, language.states)
        if candidate_features is None:
            raw = torch.as_tensor(context.features, dtype=DTYPE).index_select(
                0, _index(context.candidate_index))
            candidate_features = self.encode_vision(raw)
        return self.decide(fused, candidate_features)._replace(attention=alpha)


def _index(rows: Sequence[int]) -> torch.Tensor:
    return torch.as_tensor(list(rows), dtype=torch.long)
