"""Total parsers turning free-text model replies into labels and cause indices.

Both parse functions accept arbitrary text and never fail; unparseable
replies degrade to conservative fallbacks (neutral label, empty index list).
The accepted reply grammar is deliberately a superset of what well-behaved
models produce and is versioned so it can be tightened later.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .corpus import NEUTRAL, EMOTION_CATEGORIES, DatasetSplit, EmotionCausePair

PARSER_VERSION = "1"

# Synonym normalization applied after the canonical labels themselves.
SYNONYMS = {
    "happiness": "joy",
    "happy": "joy",
    "sad": "sadness",
    "angry": "anger",
    "mad": "anger",
    "scared": "fear",
    "afraid": "fear",
    "fearful": "fear",
    "surprised": "surprise",
    "shocked": "surprise",
    "disgusted": "disgust",
}

_CANONICAL = frozenset(EMOTION_CATEGORIES)
_WORD_RE = re.compile(r"[a-z]+")
# Standalone or U-prefixed integers only; digits glued to other alphanumerics
# (as in "U12abc") are not extracted.
_INDEX_RE = re.compile(r"(?<![0-9A-Za-z])[Uu]?([0-9]+)(?![0-9A-Za-z])")
_TOKEN_RE = re.compile(r"[0-9A-Za-z]+")


class ParseConsistencyError(ValueError):
    """Parsed replies cannot be assembled into pairs (missing emotion source)."""


@dataclass(frozen=True)
class ErcParse:
    category: str
    quality: str  # "exact" | "normalized" | "fallback"


@dataclass(frozen=True)
class EcpeParse:
    indices: tuple[int, ...]
    dropped_out_of_window: int = 0
    explicit_none: bool = False


def parse_emotion_reply(reply: str) -> ErcParse:
    """Extract an emotion label from free text; first match wins.

    Tokens are scanned left to right after lowercasing; a canonical label
    scores "exact", a synonym scores "normalized", and no match at all falls
    back to (neutral, "fallback").
    """
    for token in _WORD_RE.findall(reply.lower()):
        if token in _CANONICAL:
            return ErcParse(category=token, quality="exact")
        if token in SYNONYMS:
            return ErcParse(category=SYNONYMS[token], quality="normalized")
    return ErcParse(category=NEUTRAL, quality="fallback")


def parse_cause_reply(reply: str, target: int) -> EcpeParse:
    """Extract cause indices from free text, filtered to the window 1..target."""
    if target < 1:
        raise ValueError(f"target must be >= 1, got {target}")
    tokens = _TOKEN_RE.findall(reply)
    if len(tokens) == 1 and tokens[0].lower() == "none":
        return EcpeParse(indices=(), explicit_none=True)

    kept: list[int] = []
    dropped = 0
    for digits in _INDEX_RE.findall(reply):
        if len(digits) > 12:  # cannot possibly fit any realistic window
            dropped += 1
            continue
        value = int(digits)
        if 1 <= value <= target:
            kept.append(value)
        else:
            dropped += 1
    return EcpeParse(indices=tuple(sorted(set(kept))), dropped_out_of_window=dropped)


def render_cause_indices(parse: EcpeParse) -> str:
    """Canonical text form of a cause parse (inverse of parse_cause_reply)."""
    if not parse.indices:
        return "None"
    return ", ".join(str(i) for i in parse.indices)


def assemble_pairs(
    split: DatasetSplit,
    erc: Mapping[tuple[str, int], ErcParse],
    ecpe: Mapping[tuple[str, int], EcpeParse],
) -> list[EmotionCausePair]:
    """Combine per-target parses into pairs for one split.

    For each non-neutral target with parsed cause indices, one pair per index
    is emitted with the target's category. The category comes from the
    utterance's predicted_emotion when set, otherwise from the erc map.
    Neutral targets contribute nothing. The result is duplicate-free and
    sorted by (conversation id, emotion index, cause index).
    """
    by_conv = {c.id: c for c in split.conversations}
    pairs: dict[tuple[str, EmotionCausePair], None] = {}
    for (conv_id, target), parse in ecpe.items():
        conv = by_conv.get(conv_id)
        if conv is None:
            raise ParseConsistencyError(f"no conversation {conv_id!r} in split {split.name!r}")
        utterance = conv.utterance(target)
        if utterance.predicted_emotion is not None:
            category = utterance.predicted_emotion
        elif (conv_id, target) in erc:
            category = erc[(conv_id, target)].category
        else:
            raise ParseConsistencyError(
                f"target {conv_id}:{target} has neither a predicted emotion nor an ERC parse")
        if category == NEUTRAL:
            continue
        for cause in parse.indices:
            pair = EmotionCausePair(emotion_index=target, category=category, cause_index=cause)
            pairs[(conv_id, pair)] = None
    ordered = sorted(pairs, key=lambda kp: (kp[0], kp[1].emotion_index, kp[1].cause_index, kp[1].category))
    return [pair for _, pair in ordered]


def keyed_pairs(
    split: DatasetSplit,
    erc: Mapping[tuple[str, int], ErcParse],
    ecpe: Mapping[tuple[str, int], EcpeParse],
) -> dict[str, list[EmotionCausePair]]:
    """Like assemble_pairs but grouped by conversation id (for scoring/reports)."""
    erc_by_conv: dict[str, dict[tuple[str, int], ErcParse]] = {}
    for key, value in erc.items():
        erc_by_conv.setdefault(key[0], {})[key] = value
    ecpe_by_conv: dict[str, dict[tuple[str, int], EcpeParse]] = {}
    for key, value in ecpe.items():
        ecpe_by_conv.setdefault(key[0], {})[key] = value

    out: dict[str, list[EmotionCausePair]] = {}
    for conv in split.conversations:
        if conv.id not in ecpe_by_conv:
            continue
        sub = DatasetSplit(name=split.name, conversations=(conv,))
        got = assemble_pairs(sub, erc_by_conv.get(conv.id, {}), ecpe_by_conv[conv.id])
        if got:
            out[conv.id] = got
    return out
