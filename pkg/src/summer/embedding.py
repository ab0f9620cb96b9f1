"""Utterance-speaker embedding: projected features + speaker vector + position.

For every modality, utterance i of a dialogue embeds as

    U_e[modality][i] = projection(features_i) + V[speaker_i] + P[i]

where V is a learnable per-modality speaker table, P a shared absolute
position table over utterance positions, and the projection reconciles the
modality's raw feature width with the shared embedding width d_s.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor
from .config import ModelConfig
from .data import DialogueRecord
from .errors import ValidationError
from .layers import Linear

MIN_POSITIONS = 64


class EmbeddingParams:
    """Learnable tables and projections for a set of modalities."""

    def __init__(self, config: ModelConfig, modalities: tuple[str, ...],
                 max_positions: int, rng: np.random.Generator):
        self.modalities = tuple(modalities)
        self.max_positions = max(int(max_positions), MIN_POSITIONS)
        self.num_speakers = config.num_speakers
        self.projections = {
            m: Linear(rng, config.feature_dim(m), config.d_s, bias=False)
            for m in self.modalities
        }
        self.speaker_tables = {
            m: Tensor(0.02 * rng.standard_normal((config.num_speakers, config.d_s)),
                      requires_grad=True)
            for m in self.modalities
        }
        self.position_table = Tensor(
            0.02 * rng.standard_normal((self.max_positions, config.d_s)),
            requires_grad=True,
        )

    def parameters(self, prefix: str = "embed") -> dict[str, Tensor]:
        params: dict[str, Tensor] = {f"{prefix}.position": self.position_table}
        for m in self.modalities:
            params.update(self.projections[m].parameters(f"{prefix}.proj.{m}"))
            params[f"{prefix}.speaker.{m}"] = self.speaker_tables[m]
        return params


def embed_utterances(dialogue: DialogueRecord, params: EmbeddingParams) -> dict[str, Tensor]:
    """Embed one dialogue into per-modality sequences of shape (length, d_s)."""
    length = len(dialogue)
    if length > params.max_positions:
        raise ValidationError(
            f"dialogue {dialogue.dialogue_id}: position {length - 1} out of bounds "
            f"(max_positions {params.max_positions})"
        )
    speakers = np.array([u.speaker for u in dialogue.utterances])
    if speakers.max() >= params.num_speakers:
        raise ValidationError(
            f"dialogue {dialogue.dialogue_id}: speaker {speakers.max()} out of bounds "
            f"(num_speakers {params.num_speakers})"
        )
    positions = params.position_table[np.arange(length)]
    embedded = {}
    for m in params.modalities:
        feats = Tensor(np.stack([u.features(m) for u in dialogue.utterances]))
        projected = params.projections[m](feats)
        embedded[m] = projected + params.speaker_tables[m][speakers] + positions
    return embedded
