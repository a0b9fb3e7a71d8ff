"""Deterministic compilation of conversations into instruction records.

Prompts are assembled from frozen building blocks: the free-text task
definitions and question lines live in a versioned wording file shipped with
the package (wording_v1.json, keyed by stage, structure, and modality), while
the section headings and the demonstration example are frozen here. Identical
inputs always render byte-identical prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

from .corpus import NEUTRAL, Conversation, DatasetSplit, Utterance
from .ioutil import atomic_write_text

WORDING_RESOURCE = "wording_v1.json"

STAGE_ERC = "ERC"
STAGE_ECPE = "ECPE"
STAGES = (STAGE_ERC, STAGE_ECPE)

STRUCTURES = ("task", "task+example", "task+example+candidate")
MODALITIES = ("text", "text+video")
LABEL_SOURCES = ("gold", "predicted", "none")
MODES = ("train", "infer")

SECTION_TASK = "Task Definition:"
SECTION_EXAMPLE = "Example:"
SECTION_CONVERSATION = "Input conversation:"
SECTION_CANDIDATES = "Candidate utterances:"
SECTION_VIDEO = "Video description of target utterance:"
SECTION_TARGET = "Target utterance:"
SECTION_QUESTION = "Question:"
ANSWER_HEADING = "Answer:"

NO_CAUSE_TOKEN = "None"


class TemplateError(ValueError):
    """A compilation precondition was violated."""


@dataclass(frozen=True)
class TemplateVariant:
    structure: str = "task+example+candidate"
    modality: str = "text"

    def __post_init__(self) -> None:
        if self.structure not in STRUCTURES:
            raise TemplateError(f"unknown template structure {self.structure!r}; expected one of {STRUCTURES}")
        if self.modality not in MODALITIES:
            raise TemplateError(f"unknown template modality {self.modality!r}; expected one of {MODALITIES}")

    @property
    def with_example(self) -> bool:
        return self.structure in ("task+example", "task+example+candidate")

    @property
    def with_candidates(self) -> bool:
        return self.structure == "task+example+candidate"


@dataclass(frozen=True)
class CompileOptions:
    """Knobs for prompt assembly.

    max_prompt_chars approximates the tokenizer budget at roughly four
    characters per token; on overflow the earliest conversation lines are
    dropped first, and the target and candidate lines are never dropped.
    """

    max_prompt_chars: int = 8192
    include_target_in_candidates: bool = True


DEFAULT_OPTIONS = CompileOptions()


@dataclass(frozen=True)
class PromptSections:
    task_definition: str
    example_block: str | None
    conversation_block: str
    candidate_block: str | None
    video_block: str | None
    target_block: str
    question_line: str


@dataclass(frozen=True)
class InstructionRecord:
    record_id: str
    stage: str
    prompt: str
    expected_output: str
    variant: TemplateVariant
    target: tuple[str, int]
    dropped_lines: int = 0


# The built-in demonstration conversation used by task+example variants:
# (index, emotion label, speaker, text). The worked answer for target 4 is
# causes "2, 3"; for the ERC rendering the answer is its label "joy".
_DEMO_LINES = (
    (1, "joy", "Chandler", "Hey Pheebs!"),
    (2, "surprise", "Phoebe", "Ohh! You made up!"),
    (3, "joy", "Monica", "Yeah, I couldn't be mad at him for too long."),
    (4, "joy", "Chandler", "Yeah, she couldn't live without the Chan Love."),
    (5, "disgust", "Phoebe", "Ohh, get a room."),
)
_DEMO_TARGET = 4
_DEMO_CAUSES = "2, 3"


@lru_cache(maxsize=1)
def _wording_document() -> dict:
    raw = resources.files("emocause").joinpath(WORDING_RESOURCE).read_text(encoding="utf-8")
    return json.loads(raw)


def wording_version() -> str:
    return _wording_document()["version"]


def wording(stage: str, structure: str, modality: str) -> dict:
    """Look up the frozen task definition and question line for one key."""
    doc = _wording_document()
    try:
        return doc["templates"][stage][structure][modality]
    except KeyError as exc:
        raise TemplateError(f"no wording for ({stage}, {structure}, {modality})") from exc


def format_utterance_line(u: Utterance, label_source: str) -> str:
    """Render one conversation line, optionally tagged with its emotion label."""
    if label_source == "none":
        return f"{u.index}. {u.speaker}: {u.text}"
    if label_source == "gold":
        label = u.gold_emotion
    elif label_source == "predicted":
        label = u.predicted_emotion
    else:
        raise TemplateError(f"unknown label source {label_source!r}")
    if label is None:
        raise TemplateError(f"utterance {u.index} has no {label_source} emotion label")
    return f"{u.index}_{label}. {u.speaker}: {u.text}"


def _demo_line(index: int, label: str | None, speaker: str, text: str, labeled: bool) -> str:
    if labeled:
        return f"{index}_{label}. {speaker}: {text}"
    return f"{index}. {speaker}: {text}"


def _demo_block(question: str, labeled: bool, answer: str) -> str:
    lines = [SECTION_EXAMPLE, SECTION_CONVERSATION]
    lines += [_demo_line(i, lab, sp, tx, labeled) for i, lab, sp, tx in _DEMO_LINES]
    i, lab, sp, tx = _DEMO_LINES[_DEMO_TARGET - 1]
    lines += [SECTION_TARGET, _demo_line(i, lab, sp, tx, labeled)]
    lines += [SECTION_QUESTION, question, ANSWER_HEADING, answer]
    return "\n".join(lines)


def _render(sections: PromptSections) -> str:
    blocks = [
        SECTION_TASK + "\n" + sections.task_definition,
        sections.example_block,
        sections.conversation_block,
        sections.candidate_block,
        sections.video_block,
        sections.target_block,
        SECTION_QUESTION + "\n" + sections.question_line,
    ]
    return "\n\n".join(b for b in blocks if b is not None)


def _apply_budget(sections: PromptSections, options: CompileOptions) -> tuple[str, int]:
    """Render, dropping earliest conversation lines until the prompt fits."""
    prompt = _render(sections)
    dropped = 0
    lines = sections.conversation_block.split("\n")  # lines[0] is the heading
    while len(prompt) > options.max_prompt_chars and len(lines) > 1:
        del lines[1]
        dropped += 1
        sections = PromptSections(
            task_definition=sections.task_definition,
            example_block=sections.example_block,
            conversation_block="\n".join(lines),
            candidate_block=sections.candidate_block,
            video_block=sections.video_block,
            target_block=sections.target_block,
            question_line=sections.question_line,
        )
        prompt = _render(sections)
    return prompt, dropped


def _check_target(c: Conversation, target: int) -> None:
    if not 1 <= target <= c.n:
        raise TemplateError(f"target {target} outside 1..{c.n} for conversation {c.id!r}")


def _record_id(conv_id: str, target: int, stage: str) -> str:
    return f"{conv_id}:{target}:{stage}"


def compile_erc_record(
    c: Conversation,
    target: int,
    variant: TemplateVariant,
    mode: str = "infer",
    options: CompileOptions = DEFAULT_OPTIONS,
) -> InstructionRecord:
    """Compile one emotion-recognition prompt for the target utterance.

    The conversation block is rendered without labels (the labels are what
    the model is asked to produce); in train mode the expected output is the
    target's gold label.
    """
    _check_target(c, target)
    if mode not in MODES:
        raise TemplateError(f"unknown mode {mode!r}")
    words = wording(STAGE_ERC, variant.structure, variant.modality)

    expected = ""
    if mode == "train":
        gold = c.utterance(target).gold_emotion
        if gold is None:
            raise TemplateError(f"cannot compile training record: utterance {target} of "
                                f"{c.id!r} has no gold emotion")
        expected = gold

    example = _demo_block(words["question"], labeled=False, answer="joy") if variant.with_example else None
    conversation = "\n".join([SECTION_CONVERSATION] +
                             [format_utterance_line(u, "none") for u in c.utterances])
    video = _video_block(c, target, variant)
    target_block = "\n".join([SECTION_TARGET, format_utterance_line(c.utterance(target), "none")])
    sections = PromptSections(
        task_definition=words["task_definition"],
        example_block=example,
        conversation_block=conversation,
        candidate_block=None,
        video_block=video,
        target_block=target_block,
        question_line=words["question"],
    )
    prompt, dropped = _apply_budget(sections, options)
    return InstructionRecord(
        record_id=_record_id(c.id, target, STAGE_ERC),
        stage=STAGE_ERC,
        prompt=prompt,
        expected_output=expected,
        variant=variant,
        target=(c.id, target),
        dropped_lines=dropped,
    )


def _video_block(c: Conversation, target: int, variant: TemplateVariant) -> str | None:
    if variant.modality != "text+video":
        return None
    desc = c.utterance(target).video_description
    if desc is None:
        return None
    return SECTION_VIDEO + "\n" + desc


def expected_cause_output(c: Conversation, target: int) -> str:
    """Ascending comma-separated gold cause indices, or the no-cause token."""
    if c.gold_pairs is None:
        raise TemplateError(f"conversation {c.id!r} has no gold pairs")
    causes = sorted(p.cause_index for p in c.pairs_for_target(target))
    if not causes:
        return NO_CAUSE_TOKEN
    return ", ".join(str(i) for i in causes)


def compile_ecpe_record(
    c: Conversation,
    target: int,
    variant: TemplateVariant,
    label_source: str = "gold",
    mode: str = "infer",
    options: CompileOptions = DEFAULT_OPTIONS,
    _wording_stage: str = STAGE_ECPE,
) -> InstructionRecord:
    """Compile one cause-extraction prompt for the target utterance.

    With label_source gold or predicted, every utterance up to the target
    must carry that label and the target's label must not be neutral; label
    rendering then covers every utterance that has the label. Label source
    "none" renders unlabeled lines and skips the neutrality check (used by
    the independent-stages and single-stage pipeline modes).
    """
    _check_target(c, target)
    if mode not in MODES:
        raise TemplateError(f"unknown mode {mode!r}")
    if label_source not in LABEL_SOURCES:
        raise TemplateError(f"unknown label source {label_source!r}")
    words = wording(_wording_stage, variant.structure, variant.modality)

    if label_source != "none":
        for u in c.utterances[:target]:
            _label_of(u, label_source)  # raises when absent
        if _label_of(c.utterance(target), label_source) == NEUTRAL:
            raise TemplateError(f"target {target} of {c.id!r} is labeled neutral; "
                                "neutral utterances cannot head a pair")

    expected = ""
    if mode == "train":
        if _wording_stage == STAGE_ECPE:
            expected = expected_cause_output(c, target)
        else:  # single-stage worked answers carry the label too
            label = _label_of(c.utterance(target), "gold")
            expected = f"{label}: {expected_cause_output(c, target)}"

    labeled = label_source != "none"
    example_answer = _DEMO_CAUSES if _wording_stage == STAGE_ECPE else f"joy: {_DEMO_CAUSES}"
    example = (_demo_block(words["question"], labeled=labeled, answer=example_answer)
               if variant.with_example else None)
    conversation = "\n".join([SECTION_CONVERSATION] +
                             [_line_with_available_label(u, label_source) for u in c.utterances])
    candidates = None
    if variant.with_candidates:
        last = target if options.include_target_in_candidates else max(target - 1, 1)
        candidates = "\n".join([SECTION_CANDIDATES] +
                               [_line_with_available_label(u, label_source)
                                for u in c.utterances[:last]])
    video = _video_block(c, target, variant)
    target_block = "\n".join([SECTION_TARGET,
                              _line_with_available_label(c.utterance(target), label_source)])
    sections = PromptSections(
        task_definition=words["task_definition"],
        example_block=example,
        conversation_block=conversation,
        candidate_block=candidates,
        video_block=video,
        target_block=target_block,
        question_line=words["question"],
    )
    prompt, dropped = _apply_budget(sections, options)
    return InstructionRecord(
        record_id=_record_id(c.id, target, STAGE_ECPE),
        stage=STAGE_ECPE,
        prompt=prompt,
        expected_output=expected,
        variant=variant,
        target=(c.id, target),
        dropped_lines=dropped,
    )


def compile_single_stage_record(
    c: Conversation,
    target: int,
    variant: TemplateVariant,
    mode: str = "infer",
    options: CompileOptions = DEFAULT_OPTIONS,
) -> InstructionRecord:
    """Compile a prompt that asks for the emotion and its causes in one shot."""
    return compile_ecpe_record(c, target, variant, label_source="none", mode=mode,
                               options=options, _wording_stage="SINGLE")


def _label_of(u: Utterance, label_source: str) -> str:
    label = u.gold_emotion if label_source == "gold" else u.predicted_emotion
    if label is None:
        raise TemplateError(f"utterance {u.index} has no {label_source} emotion label")
    return label


def _line_with_available_label(u: Utterance, label_source: str) -> str:
    """Labeled line when the label exists, plain line otherwise."""
    if label_source == "none":
        return format_utterance_line(u, "none")
    label = u.gold_emotion if label_source == "gold" else u.predicted_emotion
    return format_utterance_line(u, label_source if label is not None else "none")


def ecpe_targets(c: Conversation, label_source: str) -> list[int]:
    """Targets eligible for cause extraction: non-neutral under the label source.

    With label source "none" every utterance is eligible (neutrality is
    unknowable without labels).
    """
    if label_source == "none":
        return [u.index for u in c.utterances]
    out = []
    for u in c.utterances:
        label = u.gold_emotion if label_source == "gold" else u.predicted_emotion
        if label is None:
            raise TemplateError(f"utterance {u.index} of {c.id!r} has no {label_source} label")
        if label != NEUTRAL:
            out.append(u.index)
    return out


def compile_split(
    split: DatasetSplit,
    stage: str,
    variant: TemplateVariant,
    label_source: str = "gold",
    mode: str = "infer",
    options: CompileOptions = DEFAULT_OPTIONS,
) -> list[InstructionRecord]:
    """Compile a whole split, ordered by (conversation id, target index).

    ERC yields exactly one record per utterance; ECPE yields one record per
    eligible target (see ecpe_targets).
    """
    if stage not in STAGES:
        raise TemplateError(f"unknown stage {stage!r}; expected one of {STAGES}")
    records: list[InstructionRecord] = []
    for conv in sorted(split.conversations, key=lambda c: c.id):
        if stage == STAGE_ERC:
            for u in conv.utterances:
                records.append(compile_erc_record(conv, u.index, variant, mode, options))
        else:
            for target in ecpe_targets(conv, label_source):
                records.append(compile_ecpe_record(conv, target, variant, label_source,
                                                   mode, options))
    return records


# ---------------------------------------------------------------------------
# Instruction JSONL
# ---------------------------------------------------------------------------

def record_to_json_line(record: InstructionRecord) -> str:
    return json.dumps(
        {"id": record.record_id, "stage": record.stage,
         "instruction": record.prompt, "output": record.expected_output},
        ensure_ascii=False,
    )


def write_records_jsonl(records: Iterable[InstructionRecord], path: str | Path) -> Path:
    """Write records one JSON object per line (empty outputs allowed)."""
    text = "".join(record_to_json_line(r) + "\n" for r in records)
    return atomic_write_text(path, text)


def render_training_file(records: Iterable[InstructionRecord], path: str | Path) -> Path:
    """Write a training JSONL; every record must carry a non-empty output."""
    records = list(records)
    for r in records:
        if not r.expected_output:
            raise TemplateError(f"record {r.record_id} has an empty expected output; "
                                "training files require train-mode records")
    return write_records_jsonl(records, path)


def parse_record_id(record_id: str) -> tuple[str, int, str]:
    """Split a record id into (conversation id, target index, stage).

    Tolerates colons inside the conversation id and origin tags appended
    after the stage (as in iterative training files).
    """
    parts = record_id.split(":")
    for i in range(len(parts) - 1, 0, -1):
        if parts[i] in STAGES:
            try:
                return ":".join(parts[:i - 1]), int(parts[i - 1]), parts[i]
            except ValueError:
                break
    raise TemplateError(f"record id {record_id!r} does not look like conversation:target:stage")


def record_from_json_obj(obj: dict) -> InstructionRecord:
    """Rebuild a minimal record from an instruction JSONL line."""
    conv_id, target, stage = parse_record_id(obj["id"])
    return InstructionRecord(
        record_id=obj["id"],
        stage=stage,
        prompt=obj["instruction"],
        expected_output=obj.get("output", ""),
        variant=TemplateVariant(),
        target=(conv_id, target),
    )


def read_records_jsonl(path: str | Path) -> list[dict]:
    """Read an instruction JSONL back as plain dicts (id/stage/instruction/output)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TemplateError(f"{path}:{line_no}: malformed record line: {exc}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "instruction" not in obj:
                raise TemplateError(f"{path}:{line_no}: record line lacks id/instruction")
            out.append(obj)
    return out
