"""Conversation corpus loading, validation, merging, and annotation.

The canonical on-disk document is a single JSON object::

    {"split": str,
     "conversations": [
        {"id": str,
         "utterances": [{"index": int, "speaker": str, "text": str,
                         "emotion": str|null, "video_description": str|null,
                         "media_ref": str|null}],
         "pairs": [[emotion_index, category, cause_index]] | null}]}

All values are immutable after construction; mutating operations return new
values. Predicted emotion labels are runtime-only state and are never written
to the canonical document.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from .ioutil import atomic_write_text

log = logging.getLogger(__name__)

NEUTRAL = "neutral"
EMOTION_CATEGORIES = ("anger", "disgust", "fear", "joy", "sadness", "surprise", NEUTRAL)
NON_NEUTRAL_CATEGORIES = tuple(c for c in EMOTION_CATEGORIES if c != NEUTRAL)

_CATEGORY_SET = frozenset(EMOTION_CATEGORIES)


class CorpusError(ValueError):
    """A conversation document is malformed or violates a corpus invariant."""


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: str
    text: str
    gold_emotion: str | None = None
    predicted_emotion: str | None = None
    video_description: str | None = None
    media_ref: str | None = None


@dataclass(frozen=True)
class EmotionCausePair:
    """One (emotion utterance, category, cause utterance) triple.

    Self-cause pairs (cause_index == emotion_index) are legal; the category
    is never neutral in a valid corpus.
    """

    emotion_index: int
    category: str
    cause_index: int

    def as_list(self) -> list:
        return [self.emotion_index, self.category, self.cause_index]


@dataclass(frozen=True)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]
    gold_pairs: tuple[EmotionCausePair, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if self.gold_pairs is not None:
            object.__setattr__(self, "gold_pairs", tuple(self.gold_pairs))

    @property
    def n(self) -> int:
        return len(self.utterances)

    def utterance(self, index: int) -> Utterance:
        """Look up an utterance by its 1-based index."""
        for u in self.utterances:
            if u.index == index:
                return u
        raise CorpusError(f"conversation {self.id!r} has no utterance {index}")

    def pairs_for_target(self, target: int) -> tuple[EmotionCausePair, ...]:
        if self.gold_pairs is None:
            return ()
        return tuple(p for p in self.gold_pairs if p.emotion_index == target)


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    conversations: tuple[Conversation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "conversations", tuple(self.conversations))

    def __len__(self) -> int:
        return len(self.conversations)

    def conversation(self, conv_id: str) -> Conversation:
        for c in self.conversations:
            if c.id == conv_id:
                return c
        raise CorpusError(f"split {self.name!r} has no conversation {conv_id!r}")

    @property
    def utterance_count(self) -> int:
        return sum(c.n for c in self.conversations)

    @property
    def gold_pair_count(self) -> int:
        return sum(len(c.gold_pairs or ()) for c in self.conversations)


@dataclass(frozen=True)
class Finding:
    conversation_id: str | None
    utterance_index: int | None
    rule: str
    severity: str  # "error" | "warning"
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def warnings(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "warning")

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_split(split: DatasetSplit) -> ValidationReport:
    """Check every corpus invariant and report findings as data, never raising."""
    findings: list[Finding] = []
    seen_ids: set[str] = set()
    for conv in split.conversations:
        if conv.id in seen_ids:
            findings.append(Finding(conv.id, None, "duplicate-conversation-id", "error",
                                    f"conversation id {conv.id!r} appears more than once"))
        seen_ids.add(conv.id)
        findings.extend(_validate_conversation(conv))
    return ValidationReport(tuple(findings))


def _validate_conversation(conv: Conversation) -> list[Finding]:
    findings: list[Finding] = []
    indices = [u.index for u in conv.utterances]
    if indices != list(range(1, len(indices) + 1)):
        findings.append(Finding(conv.id, None, "utterance-index-sequence", "error",
                                f"utterance indices must be exactly 1..{len(indices)} in order, got {indices}"))
    for u in conv.utterances:
        if not u.speaker.strip():
            findings.append(Finding(conv.id, u.index, "empty-speaker", "error",
                                    "speaker is empty after whitespace trim"))
        if not u.text:
            findings.append(Finding(conv.id, u.index, "empty-text", "warning",
                                    "utterance text is empty"))
        for label in (u.gold_emotion, u.predicted_emotion):
            if label is not None and label not in _CATEGORY_SET:
                findings.append(Finding(conv.id, u.index, "unknown-emotion-label", "error",
                                        f"unknown emotion label {label!r}"))

    valid_indices = set(indices)
    seen_pairs: set[EmotionCausePair] = set()
    for p in conv.gold_pairs or ():
        if p.category not in _CATEGORY_SET:
            findings.append(Finding(conv.id, p.emotion_index, "unknown-emotion-label", "error",
                                    f"unknown pair category {p.category!r}"))
        elif p.category == NEUTRAL:
            findings.append(Finding(conv.id, p.emotion_index, "neutral-pair-forbidden", "error",
                                    "neutral pair forbidden: a pair's category can never be neutral"))
        for idx in (p.emotion_index, p.cause_index):
            if idx not in valid_indices:
                findings.append(Finding(conv.id, idx, "dangling-pair-index", "error",
                                        f"pair {p.as_list()} references missing utterance {idx}"))
        if p.emotion_index in valid_indices:
            gold = conv.utterance(p.emotion_index).gold_emotion
            if gold is not None and p.category != gold and p.category in _CATEGORY_SET:
                findings.append(Finding(conv.id, p.emotion_index, "pair-category-mismatch", "error",
                                        f"category mismatch: pair says {p.category!r} but utterance "
                                        f"{p.emotion_index} is labeled {gold!r}"))
        if p in seen_pairs:
            findings.append(Finding(conv.id, p.emotion_index, "duplicate-pair", "error",
                                    f"duplicate pair {p.as_list()}"))
        seen_pairs.add(p)
    return findings


# ---------------------------------------------------------------------------
# Canonical document I/O
# ---------------------------------------------------------------------------

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise CorpusError(message)


def _parse_utterance(obj: object, conv_id: str) -> Utterance:
    _require(isinstance(obj, dict), f"conversation {conv_id!r}: utterance entry is not an object")
    assert isinstance(obj, dict)
    index = obj.get("index")
    speaker = obj.get("speaker")
    text = obj.get("text")
    _require(isinstance(index, int) and not isinstance(index, bool),
             f"conversation {conv_id!r}: utterance index must be an integer")
    _require(isinstance(speaker, str), f"conversation {conv_id!r}: speaker must be a string")
    _require(isinstance(text, str), f"conversation {conv_id!r}: text must be a string")
    emotion = obj.get("emotion")
    if emotion is not None:
        _require(isinstance(emotion, str) and emotion in _CATEGORY_SET,
                 f"conversation {conv_id!r} utterance {index}: unknown emotion label {emotion!r}")
    video = obj.get("video_description")
    _require(video is None or isinstance(video, str),
             f"conversation {conv_id!r} utterance {index}: video_description must be a string or null")
    media = obj.get("media_ref")
    _require(media is None or isinstance(media, str),
             f"conversation {conv_id!r} utterance {index}: media_ref must be a string or null")
    return Utterance(index=index, speaker=speaker, text=text, gold_emotion=emotion,
                     video_description=video, media_ref=media)


def _parse_pair(obj: object, conv_id: str) -> EmotionCausePair:
    _require(isinstance(obj, (list, tuple)) and len(obj) == 3,
             f"conversation {conv_id!r}: pair must be [emotion_index, category, cause_index]")
    e, cat, c = obj  # type: ignore[misc]
    _require(isinstance(e, int) and isinstance(c, int) and not isinstance(e, bool) and not isinstance(c, bool),
             f"conversation {conv_id!r}: pair indices must be integers")
    _require(isinstance(cat, str) and cat in _CATEGORY_SET,
             f"conversation {conv_id!r}: unknown emotion label {cat!r} in pair")
    return EmotionCausePair(emotion_index=e, category=cat, cause_index=c)


def parse_split_document(doc: object, split_name: str | None = None) -> DatasetSplit:
    """Build a validated DatasetSplit from a parsed canonical document."""
    _require(isinstance(doc, dict), "document root must be an object")
    assert isinstance(doc, dict)
    name = split_name if split_name is not None else doc.get("split")
    _require(isinstance(name, str) and bool(name), "document must carry a non-empty 'split' name")
    convs_obj = doc.get("conversations")
    _require(isinstance(convs_obj, list), "document must carry a 'conversations' list")
    conversations = []
    for conv_obj in convs_obj:  # type: ignore[union-attr]
        _require(isinstance(conv_obj, dict), "conversation entry is not an object")
        conv_id = conv_obj.get("id")
        _require(isinstance(conv_id, str) and bool(conv_id), "conversation must carry a non-empty 'id'")
        utt_obj = conv_obj.get("utterances")
        _require(isinstance(utt_obj, list), f"conversation {conv_id!r} must carry an 'utterances' list")
        utterances = tuple(_parse_utterance(u, conv_id) for u in utt_obj)
        pairs_obj = conv_obj.get("pairs")
        pairs: tuple[EmotionCausePair, ...] | None
        if pairs_obj is None:
            pairs = None
        else:
            _require(isinstance(pairs_obj, list), f"conversation {conv_id!r}: 'pairs' must be a list or null")
            pairs = tuple(_parse_pair(p, conv_id) for p in pairs_obj)
        conversations.append(Conversation(id=conv_id, utterances=utterances, gold_pairs=pairs))

    split = DatasetSplit(name=name, conversations=tuple(conversations))
    report = validate_split(split)
    if not report.ok:
        lines = "; ".join(f"[{f.rule}] {f.message}" for f in report.errors[:8])
        more = "" if len(report.errors) <= 8 else f" (+{len(report.errors) - 8} more)"
        raise CorpusError(f"split {name!r} failed validation: {lines}{more}")
    return split


def load_split(path: str | Path, split_name: str | None = None) -> DatasetSplit:
    """Load and fully validate a canonical conversation file."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"malformed document {path}: {exc}") from exc
    return parse_split_document(doc, split_name)


def split_to_document(split: DatasetSplit) -> dict:
    """Render a split as a canonical document (fixed field order)."""
    return {
        "split": split.name,
        "conversations": [
            {
                "id": c.id,
                "utterances": [
                    {
                        "index": u.index,
                        "speaker": u.speaker,
                        "text": u.text,
                        "emotion": u.gold_emotion,
                        "video_description": u.video_description,
                        "media_ref": u.media_ref,
                    }
                    for u in c.utterances
                ],
                "pairs": None if c.gold_pairs is None else [p.as_list() for p in c.gold_pairs],
            }
            for c in split.conversations
        ],
    }


def serialize_split(split: DatasetSplit) -> str:
    return json.dumps(split_to_document(split), ensure_ascii=False, indent=2) + "\n"


def write_split(split: DatasetSplit, path: str | Path) -> Path:
    path = Path(path)
    atomic_write_text(path, serialize_split(split))
    return path


# ---------------------------------------------------------------------------
# Split operations
# ---------------------------------------------------------------------------

def merge_splits(a: DatasetSplit, b: DatasetSplit, merged_name: str) -> DatasetSplit:
    """Concatenate two splits; colliding conversation ids fail rather than dedupe."""
    ids_a = {c.id for c in a.conversations}
    collisions = sorted(ids_a & {c.id for c in b.conversations})
    if collisions:
        raise CorpusError(f"conversation id collision while merging: {collisions}")
    return DatasetSplit(name=merged_name, conversations=a.conversations + b.conversations)


def inject_predicted_emotions(
    split: DatasetSplit, predictions: Mapping[tuple[str, int], str]
) -> DatasetSplit:
    """Return a new split with predicted_emotion set from the map; gold untouched."""
    known = {(c.id, u.index) for c in split.conversations for u in c.utterances}
    for key, label in predictions.items():
        if key not in known:
            raise CorpusError(f"prediction key {key} matches no utterance in split {split.name!r}")
        if label not in _CATEGORY_SET:
            raise CorpusError(f"prediction for {key} carries unknown emotion label {label!r}")
    conversations = []
    for conv in split.conversations:
        utterances = tuple(
            replace(u, predicted_emotion=predictions[(conv.id, u.index)])
            if (conv.id, u.index) in predictions else u
            for u in conv.utterances
        )
        conversations.append(replace(conv, utterances=utterances))
    return DatasetSplit(name=split.name, conversations=tuple(conversations))


def attach_video_descriptions(split: DatasetSplit, sidecar: str | Path) -> DatasetSplit:
    """Attach sidecar descriptions; unmatched entries are logged, never fatal.

    Sidecar format: a JSON list of {"conversation", "index", "description"}.
    """
    try:
        doc = json.loads(Path(sidecar).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError(f"malformed sidecar {sidecar}: {exc}") from exc
    _require(isinstance(doc, list), "sidecar must be a JSON list")

    descriptions: dict[tuple[str, int], str] = {}
    for entry in doc:
        _require(isinstance(entry, dict), "sidecar entry is not an object")
        conv_id = entry.get("conversation")
        index = entry.get("index")
        desc = entry.get("description")
        _require(isinstance(conv_id, str) and isinstance(index, int) and isinstance(desc, str),
                 f"sidecar entry {entry!r} must carry conversation, index, description")
        descriptions[(conv_id, index)] = desc

    known = {(c.id, u.index) for c in split.conversations for u in c.utterances}
    for key in sorted(descriptions.keys() - known):
        log.warning("sidecar entry for unknown utterance %s:%s ignored", key[0], key[1])

    conversations = []
    for conv in split.conversations:
        utterances = tuple(
            replace(u, video_description=descriptions[(conv.id, u.index)])
            if (conv.id, u.index) in descriptions else u
            for u in conv.utterances
        )
        conversations.append(replace(conv, utterances=utterances))
    return DatasetSplit(name=split.name, conversations=tuple(conversations))


# ---------------------------------------------------------------------------
# Official release converter
# ---------------------------------------------------------------------------

def convert_official(path: str | Path, split_name: str) -> DatasetSplit:
    """Convert an official ECF-style release file to the canonical schema.

    Expected layout: a JSON list of conversations with conversation_ID, a
    conversation list of {utterance_ID, text, speaker, emotion, video_name},
    and optional emotion-cause_pairs whose elements look like
    ["4_joy", "2"] (the cause element may carry a trailing "_span text").
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusError(f"malformed official file {path}: {exc}") from exc
    _require(isinstance(doc, list), "official file must be a JSON list of conversations")

    conversations = []
    for entry in doc:
        _require(isinstance(entry, dict), "official conversation entry is not an object")
        conv_id = str(entry.get("conversation_ID"))
        _require(conv_id not in ("None", ""), "official entry lacks conversation_ID")
        turns = entry.get("conversation")
        _require(isinstance(turns, list), f"conversation {conv_id}: missing 'conversation' list")
        utterances = []
        for turn in turns:
            _require(isinstance(turn, dict), f"conversation {conv_id}: turn entry is not an object")
            emotion = turn.get("emotion")
            if isinstance(emotion, str):
                emotion = emotion.strip().lower()
                _require(emotion in _CATEGORY_SET,
                         f"conversation {conv_id}: unknown emotion label {emotion!r}")
            utterances.append(Utterance(
                index=int(turn["utterance_ID"]),
                speaker=str(turn.get("speaker", "")),
                text=str(turn.get("text", "")),
                gold_emotion=emotion,
                media_ref=turn.get("video_name"),
            ))
        raw_pairs = entry.get("emotion-cause_pairs")
        pairs: tuple[EmotionCausePair, ...] | None = None
        if raw_pairs is not None:
            parsed = []
            for raw in raw_pairs:
                _require(isinstance(raw, (list, tuple)) and len(raw) == 2,
                         f"conversation {conv_id}: pair entry {raw!r} must have two elements")
                emo_part, cause_part = raw
                parsed.append(EmotionCausePair(
                    emotion_index=_leading_index(emo_part, conv_id),
                    category=_trailing_category(emo_part, conv_id),
                    cause_index=_leading_index(cause_part, conv_id),
                ))
            # the official files repeat a pair once per cause span; collapse
            pairs = tuple(dict.fromkeys(parsed))
        conversations.append(Conversation(id=conv_id, utterances=tuple(utterances), gold_pairs=pairs))

    split = DatasetSplit(name=split_name, conversations=tuple(conversations))
    report = validate_split(split)
    if not report.ok:
        first = report.errors[0]
        raise CorpusError(f"converted split failed validation: [{first.rule}] {first.message}")
    return split


def _leading_index(part: object, conv_id: str) -> int:
    _require(isinstance(part, str) and bool(part), f"conversation {conv_id}: bad pair element {part!r}")
    assert isinstance(part, str)
    head = part.split("_", 1)[0]
    try:
        return int(head)
    except ValueError as exc:
        raise CorpusError(f"conversation {conv_id}: pair element {part!r} has no leading index") from exc


def _trailing_category(part: str, conv_id: str) -> str:
    pieces = part.split("_", 1)
    _require(len(pieces) == 2 and pieces[1] in _CATEGORY_SET,
             f"conversation {conv_id}: pair element {part!r} has no valid emotion category")
    return pieces[1]
