"""Dialogue feature ingestion, synthetic corpus generation, dataset splits.

Feature files are JSON Lines, one dialogue per line:

    {"dialogue_id": "...", "utterances": [{"speaker": 0, "label": 2,
     "text": [...], "audio": [...], "visual": [...]}, ...]}

Feature extraction itself (text/audio/visual encoders) is out of scope;
files carry already-extracted per-utterance feature vectors.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import ParameterError, ParseError, ValidationError


@dataclass
class UtteranceRecord:
    """One utterance: speaker, emotion label, per-modality feature vectors."""

    speaker: int
    label: int
    text: np.ndarray
    audio: np.ndarray
    visual: np.ndarray

    def features(self, modality: str) -> np.ndarray:
        return getattr(self, modality)


@dataclass
class DialogueRecord:
    """An ordered conversation; positional index doubles as utterance position."""

    dialogue_id: str
    utterances: list[UtteranceRecord]

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def labels(self) -> np.ndarray:
        return np.array([u.label for u in self.utterances], dtype=np.int64)


_FEATURE_KEYS = {"text": "d_t", "audio": "d_a", "visual": "d_v"}


def _validate_utterance(raw: dict, dialogue_id: str, config: ModelConfig) -> UtteranceRecord:
    speaker = raw.get("speaker")
    label = raw.get("label")
    if not isinstance(speaker, int) or speaker < 0:
        raise ValidationError(f"dialogue {dialogue_id}: speaker must be a nonnegative integer")
    if not isinstance(label, int) or not 0 <= label < config.classes:
        raise ValidationError(
            f"dialogue {dialogue_id}: unknown label {label!r}, expected 0..{config.classes - 1}"
        )
    vectors = {}
    for modality, dim_name in _FEATURE_KEYS.items():
        expected = getattr(config, dim_name)
        values = raw.get(modality)
        if not isinstance(values, list):
            raise ValidationError(f"dialogue {dialogue_id}: missing {modality} features")
        if len(values) != expected:
            raise ValidationError(
                f"dialogue {dialogue_id}: {modality}_features length {len(values)}, "
                f"expected {expected}"
            )
        vectors[modality] = np.asarray(values, dtype=np.float64)
    return UtteranceRecord(speaker=speaker, label=label, **vectors)


def load_dialogues(path: str, config: ModelConfig) -> list[DialogueRecord]:
    """Read and validate a JSON-Lines feature file, preserving file order."""
    records: list[DialogueRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{line_no}: malformed JSON ({exc.msg})") from None
            dialogue_id = raw.get("dialogue_id")
            if not isinstance(dialogue_id, str):
                raise ValidationError(f"{path}:{line_no}: dialogue_id must be a string")
            utterances_raw = raw.get("utterances")
            if not isinstance(utterances_raw, list) or not utterances_raw:
                raise ValidationError(f"dialogue {dialogue_id}: needs at least one utterance")
            utterances = [_validate_utterance(u, dialogue_id, config) for u in utterances_raw]
            records.append(DialogueRecord(dialogue_id=dialogue_id, utterances=utterances))
    if not records:
        warnings.warn(f"no dialogues found in {path}", stacklevel=2)
    return records


def write_dialogues(records: list[DialogueRecord], path: str) -> None:
    """Serialize dialogues to JSON Lines with round-trip float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            payload = {
                "dialogue_id": record.dialogue_id,
                "utterances": [
                    {
                        "speaker": u.speaker,
                        "label": u.label,
                        "text": u.text.tolist(),
                        "audio": u.audio.tolist(),
                        "visual": u.visual.tolist(),
                    }
                    for u in record.utterances
                ],
            }
            fh.write(json.dumps(payload) + "\n")


def generate_synthetic(config: ModelConfig, seed: int) -> list[DialogueRecord]:
    """Seeded synthetic corpus with class-separable features.

    Per class, features are drawn around class-specific mean vectors; the
    text modality is separated strongly enough that a linear classifier
    on text alone exceeds 90% accuracy at overlap 0. ``config.overlap``
    shrinks the mean separation and inflates noise to inject class overlap;
    ``config.imbalance`` skews the label distribution geometrically.
    """
    rng = np.random.default_rng(seed)
    n_classes = config.classes
    spread = 1.0 - config.overlap

    # class-conditional means; text gets the widest separation
    separations = {"text": 4.0 * spread, "audio": 2.0 * spread, "visual": 2.0 * spread}
    noise_scale = 1.0 + 2.0 * config.overlap
    means = {}
    for modality in _FEATURE_KEYS:
        dim = config.feature_dim(modality)
        directions = rng.standard_normal((n_classes, dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means[modality] = separations[modality] * directions

    total = config.dialogues * config.dialogue_length
    if config.imbalance > 0:
        weights = np.exp(-config.imbalance * np.arange(n_classes))
        weights /= weights.sum()
        labels = rng.choice(n_classes, size=total, p=weights)
    else:
        labels = np.tile(np.arange(n_classes), total // n_classes + 1)[:total]
        rng.shuffle(labels)

    records = []
    cursor = 0
    for d in range(config.dialogues):
        utterances = []
        for _ in range(config.dialogue_length):
            label = int(labels[cursor])
            cursor += 1
            speaker = int(rng.integers(0, config.num_speakers))
            vectors = {
                modality: means[modality][label]
                + noise_scale * rng.standard_normal(config.feature_dim(modality))
                for modality in _FEATURE_KEYS
            }
            utterances.append(UtteranceRecord(speaker=speaker, label=label, **vectors))
        records.append(DialogueRecord(dialogue_id=f"syn-{seed}-{d:04d}", utterances=utterances))
    return records


def split_dataset(
    records: list[DialogueRecord],
    fractions: tuple[float, float, float],
    seed: int,
) -> tuple[list[DialogueRecord], list[DialogueRecord], list[DialogueRecord]]:
    """Deterministic dialogue-granularity partition into train/val/test."""
    fractions = tuple(float(f) for f in fractions)
    if any(f < 0 for f in fractions):
        raise ParameterError("split fractions must be >= 0")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"split fractions must sum to 1, got {sum(fractions)}")
    n = len(records)
    nonzero = sum(1 for f in fractions if f > 0)
    if n < nonzero:
        raise ValidationError(f"{n} dialogues cannot populate {nonzero} nonempty splits")

    counts = [int(np.floor(f * n)) for f in fractions]
    remainders = [f * n - c for f, c in zip(fractions, counts)]
    while sum(counts) < n:
        idx = int(np.argmax(remainders))
        counts[idx] += 1
        remainders[idx] = -1.0
    # guarantee every nonzero split is nonempty
    for i, f in enumerate(fractions):
        if f > 0 and counts[i] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[i] += 1

    order = np.random.default_rng(seed).permutation(n)
    shuffled = [records[i] for i in order]
    train = shuffled[: counts[0]]
    val = shuffled[counts[0]: counts[0] + counts[1]]
    test = shuffled[counts[0] + counts[1]:]
    return train, val, test


def count_utterances(records: list[DialogueRecord]) -> int:
    return sum(len(r) for r in records)


def longest_dialogue(records: list[DialogueRecord]) -> int:
    return max((len(r) for r in records), default=0)
