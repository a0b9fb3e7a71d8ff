"""End-to-end orchestration: staged inference, scoring, and dataset emission.

The standard flow infers emotion labels for every utterance, injects them
back into the corpus, asks for the causes of each non-neutral target, then
assembles and scores the resulting pairs. Fine-tuning itself is delegated to
external infrastructure: this module emits bit-reproducible instruction JSONL
files plus a training manifest carrying the recipe, and treats any resulting
model as just another endpoint.

Three strategies cover the ablation modes:

* "labeled": cause prompts render the configured emotion labels (default).
* "independent": the label stage still runs (it decides which targets are
  eligible) but cause prompts render no labels.
* "single": one prompt per utterance asks for the label and causes together.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import (
    NEUTRAL,
    EMOTION_CATEGORIES,
    CorpusError,
    DatasetSplit,
    EmotionCausePair,
    inject_predicted_emotions,
    load_split,
)
from .inference import (
    CompletionResult,
    EndpointConfig,
    Responder,
    ResponseCache,
    build_responder,
    complete_all,
)
from .ioutil import atomic_write_text, sha256_file, write_report_document
from .metrics import ScoreReport, score_erc, score_keyed_pairs
from .parsing import EcpeParse, ErcParse, keyed_pairs, parse_cause_reply, parse_emotion_reply
from .reporting import render_score_figure, write_score_csv
from .templates import (
    DEFAULT_OPTIONS,
    STAGE_ECPE,
    STAGE_ERC,
    CompileOptions,
    InstructionRecord,
    TemplateVariant,
    compile_ecpe_record,
    compile_single_stage_record,
    compile_split,
    ecpe_targets,
    render_training_file,
    wording_version,
    write_records_jsonl,
)

STRATEGIES = ("labeled", "independent", "single")


class ConfigError(ValueError):
    """The pipeline configuration is incomplete or inconsistent."""


@dataclass(frozen=True)
class TrainingManifest:
    """External fine-tuning recipe with the pinned default hyperparameters."""

    learning_rate: float = 1e-4
    adapter_rank: int = 8
    adapter_alpha: int = 32
    adapter_dropout: float = 0.1
    max_instruction_length: int = 2048
    max_output_length: int = 128
    batch_size: int = 1
    gradient_accumulation_steps: int = 1
    epochs: int = 2
    datasets: tuple[dict, ...] = ()
    template_version: str = "v1"

    def __post_init__(self) -> None:
        numeric = {
            "learning_rate": self.learning_rate,
            "adapter_rank": self.adapter_rank,
            "adapter_alpha": self.adapter_alpha,
            "adapter_dropout": self.adapter_dropout,
            "max_instruction_length": self.max_instruction_length,
            "max_output_length": self.max_output_length,
            "batch_size": self.batch_size,
            "gradient_accumulation_steps": self.gradient_accumulation_steps,
            "epochs": self.epochs,
        }
        for name, value in numeric.items():
            if value <= 0:
                raise ConfigError(f"manifest field {name} must be positive, got {value}")

    def to_doc(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "adapter_rank": self.adapter_rank,
            "adapter_alpha": self.adapter_alpha,
            "adapter_dropout": self.adapter_dropout,
            "max_instruction_length": self.max_instruction_length,
            "max_output_length": self.max_output_length,
            "batch_size": self.batch_size,
            "gradient_accumulation_steps": self.gradient_accumulation_steps,
            "epochs": self.epochs,
            "datasets": list(self.datasets),
            "template_version": self.template_version,
        }


@dataclass
class PipelineConfig:
    eval_path: Path | None = None
    train_path: Path | None = None
    trial_path: Path | None = None
    variant: TemplateVariant = field(default_factory=TemplateVariant)
    label_source: str = "predicted"
    strategy: str = "labeled"
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    cache_dir: Path = Path("cache")
    out_dir: Path = Path("out")
    mock: str | None = None
    stages: tuple[str, ...] = ("erc", "ecpe")
    options: CompileOptions = DEFAULT_OPTIONS

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.label_source not in ("gold", "predicted"):
            raise ConfigError(f"label_source must be gold or predicted, got {self.label_source!r}")
        unknown = set(self.stages) - {"erc", "ecpe"}
        if unknown or not self.stages:
            raise ConfigError(f"stages must be a non-empty subset of erc/ecpe, got {self.stages!r}")

    @classmethod
    def from_dict(cls, doc: Mapping, base_dir: Path | None = None) -> "PipelineConfig":
        def path_of(key: str) -> Path | None:
            value = doc.get(key)
            if value is None:
                return None
            p = Path(value)
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return p

        try:
            endpoint = EndpointConfig(**doc.get("endpoint", {}))
            variant = TemplateVariant(structure=doc.get("variant", "task+example+candidate"),
                                      modality=doc.get("modality", "text"))
            options = CompileOptions(
                max_prompt_chars=doc.get("max_prompt_chars", DEFAULT_OPTIONS.max_prompt_chars),
                include_target_in_candidates=doc.get("include_target_in_candidates", True),
            )
            return cls(
                eval_path=path_of("eval"),
                train_path=path_of("train"),
                trial_path=path_of("trial"),
                variant=variant,
                label_source=doc.get("label_source", "predicted"),
                strategy=doc.get("strategy", "labeled"),
                endpoint=endpoint,
                cache_dir=path_of("cache_dir") or Path("cache"),
                out_dir=path_of("out_dir") or Path("out"),
                mock=doc.get("mock"),
                stages=tuple(doc.get("stages", ("erc", "ecpe"))),
                options=options,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad pipeline configuration: {exc}") from exc

    def to_doc(self) -> dict:
        return {
            "eval": str(self.eval_path) if self.eval_path else None,
            "train": str(self.train_path) if self.train_path else None,
            "trial": str(self.trial_path) if self.trial_path else None,
            "variant": self.variant.structure,
            "modality": self.variant.modality,
            "label_source": self.label_source,
            "strategy": self.strategy,
            "endpoint": {
                "base_url": self.endpoint.base_url,
                "model_name": self.endpoint.model_name,
                "auth_env_var": self.endpoint.auth_env_var,
                "temperature": self.endpoint.temperature,
                "max_output_tokens": self.endpoint.max_output_tokens,
                "request_timeout": self.endpoint.request_timeout,
                "max_retries": self.endpoint.max_retries,
                "max_in_flight": self.endpoint.max_in_flight,
            },
            "cache_dir": str(self.cache_dir),
            "out_dir": str(self.out_dir),
            "mock": self.mock,
            "stages": list(self.stages),
            "max_prompt_chars": self.options.max_prompt_chars,
            "include_target_in_candidates": self.options.include_target_in_candidates,
        }


@dataclass
class StageOutcome:
    """One inference stage: its records, raw results, and parse products."""

    name: str
    records: list[InstructionRecord]
    results: list[CompletionResult]
    seconds: float
    parses: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.records)

    @property
    def cache_hits(self) -> int:
        return sum(1 for r in self.results if r.from_cache)

    @property
    def network_calls(self) -> int:
        return sum(1 for r in self.results if not r.from_cache)

    @property
    def errors(self) -> int:
        return sum(1 for r in self.results if r.error)

    def to_doc(self, include_timings: bool = True) -> dict:
        doc = {
            "name": self.name,
            "records": self.count,
            "cache_hits": self.cache_hits,
            "network_calls": self.network_calls,
            "errors": self.errors,
        }
        if include_timings:
            doc["seconds"] = round(self.seconds, 3)
        return doc


@dataclass
class RunReport:
    strategy: str
    split_name: str
    stages: list[StageOutcome]
    parse_quality: dict[str, int]
    utterances: int
    erc_predictions: int
    ecpe_records: int
    ecpe_parsed: int
    pair_count: int
    erc_score: ScoreReport | None
    pair_score: ScoreReport | None
    config: dict

    @property
    def cache_hit_rate(self) -> float:
        total = sum(s.count for s in self.stages)
        if not total:
            return 0.0
        return sum(s.cache_hits for s in self.stages) / total

    def failed_stage(self) -> str | None:
        """Name of a stage in which every completion failed, if any."""
        for s in self.stages:
            if s.count and s.errors == s.count:
                return s.name
        return None

    def to_doc(self, include_timings: bool = True) -> dict:
        return {
            "strategy": self.strategy,
            "split": self.split_name,
            "counts": {
                "utterances": self.utterances,
                "erc_predictions": self.erc_predictions,
                "ecpe_records": self.ecpe_records,
                "ecpe_replies_parsed": self.ecpe_parsed,
                "pairs": self.pair_count,
            },
            "parse_quality": dict(self.parse_quality),
            "stages": [s.to_doc(include_timings) for s in self.stages],
            "cache_hit_rate": round(self.cache_hit_rate, 4),
            "erc_score": self.erc_score.to_doc() if self.erc_score else None,
            "pair_score": self.pair_score.to_doc() if self.pair_score else None,
            "config": self.config,
        }


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------

def predictions_to_doc(split_name: str, predictions: Mapping[tuple[str, int], str]) -> dict:
    by_conv: dict[str, dict[str, str]] = {}
    for (conv_id, index), label in sorted(predictions.items()):
        by_conv.setdefault(conv_id, {})[str(index)] = label
    return {"split": split_name, "predictions": by_conv}


def load_predictions(path: str | Path) -> dict[tuple[str, int], str]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    table = doc.get("predictions") if isinstance(doc, dict) else None
    if not isinstance(table, dict):
        raise ConfigError(f"predictions file {path} lacks a 'predictions' object")
    out: dict[tuple[str, int], str] = {}
    for conv_id, labels in table.items():
        for index, label in labels.items():
            if label not in EMOTION_CATEGORIES:
                raise ConfigError(f"predictions file carries unknown label {label!r}")
            out[(conv_id, int(index))] = label
    return out


def pairs_to_doc(split_name: str, pairs_by_conv: Mapping[str, Iterable[EmotionCausePair]]) -> dict:
    return {
        "split": split_name,
        "pairs": {
            conv_id: [p.as_list() for p in sorted(
                pairs, key=lambda p: (p.emotion_index, p.cause_index, p.category))]
            for conv_id, pairs in sorted(pairs_by_conv.items())
        },
    }


def load_pairs_document(path: str | Path) -> dict[str, list[EmotionCausePair]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    table = doc.get("pairs") if isinstance(doc, dict) else None
    if not isinstance(table, dict):
        raise ConfigError(f"pairs file {path} lacks a 'pairs' object")
    out: dict[str, list[EmotionCausePair]] = {}
    for conv_id, triples in table.items():
        pairs = []
        for triple in triples:
            if (not isinstance(triple, list) or len(triple) != 3
                    or triple[1] not in EMOTION_CATEGORIES):
                raise ConfigError(f"pairs file has malformed triple {triple!r}")
            pairs.append(EmotionCausePair(int(triple[0]), triple[1], int(triple[2])))
        out[conv_id] = pairs
    return out


def _write_replies_jsonl(results: Sequence[CompletionResult], path: Path) -> None:
    lines = [json.dumps({"id": r.record_id, "reply": r.reply, "error": r.error},
                        ensure_ascii=False) for r in results]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _run_records(name: str, records: list[InstructionRecord], cfg: PipelineConfig,
                 cache: ResponseCache, responder: Responder | None) -> StageOutcome:
    start = time.perf_counter()
    results = complete_all(records, cfg.endpoint, cache, responder)
    return StageOutcome(name=name, records=records, results=results,
                        seconds=time.perf_counter() - start)


def run_erc_stage(split: DatasetSplit, cfg: PipelineConfig,
                  cache: ResponseCache | None = None,
                  responder: Responder | None = None,
                  ) -> tuple[dict[tuple[str, int], str], StageOutcome]:
    """Infer one emotion label per utterance; replies parse totally, so every
    utterance always receives a prediction (fallback neutral)."""
    cache = cache or ResponseCache(cfg.cache_dir)
    if responder is None and cfg.mock:
        responder = build_responder(cfg.mock, split)
    records = compile_split(split, STAGE_ERC, cfg.variant, mode="infer", options=cfg.options)
    outcome = _run_records("erc", records, cfg, cache, responder)
    predictions: dict[tuple[str, int], str] = {}
    for record, result in zip(outcome.records, outcome.results):
        parse = parse_emotion_reply(result.reply)
        outcome.parses[record.target] = parse
        predictions[record.target] = parse.category
    return predictions, outcome


def run_ecpe_stage(split_with_labels: DatasetSplit, cfg: PipelineConfig,
                   cache: ResponseCache | None = None,
                   responder: Responder | None = None,
                   erc_parses: Mapping[tuple[str, int], ErcParse] | None = None,
                   ) -> tuple[dict[str, list[EmotionCausePair]], StageOutcome]:
    """Infer causes for every eligible target and assemble pairs.

    With the "independent" strategy the prompts render no labels, but
    eligibility still follows the configured label source.
    """
    cache = cache or ResponseCache(cfg.cache_dir)
    if responder is None and cfg.mock:
        responder = build_responder(cfg.mock, split_with_labels)
    render_source = "none" if cfg.strategy == "independent" else cfg.label_source
    records: list[InstructionRecord] = []
    for conv in sorted(split_with_labels.conversations, key=lambda c: c.id):
        for target in ecpe_targets(conv, cfg.label_source):
            records.append(compile_ecpe_record(conv, target, cfg.variant,
                                               label_source=render_source, mode="infer",
                                               options=cfg.options))
    outcome = _run_records("ecpe", records, cfg, cache, responder)
    ecpe_parses: dict[tuple[str, int], EcpeParse] = {}
    for record, result in zip(outcome.records, outcome.results):
        ecpe_parses[record.target] = parse_cause_reply(result.reply, record.target[1])
    outcome.parses = ecpe_parses
    emotion_source = dict(erc_parses or {})
    if cfg.label_source == "gold":
        # gold labels are the configured emotion source for pair categories
        for conv in split_with_labels.conversations:
            for u in conv.utterances:
                key = (conv.id, u.index)
                if key not in emotion_source and u.gold_emotion is not None:
                    emotion_source[key] = ErcParse(u.gold_emotion, "exact")
    pairs = keyed_pairs(split_with_labels, emotion_source, ecpe_parses)
    return pairs, outcome


def _run_single_stage(split: DatasetSplit, cfg: PipelineConfig, cache: ResponseCache,
                      responder: Responder | None,
                      ) -> tuple[dict[tuple[str, int], str],
                                 dict[str, list[EmotionCausePair]], StageOutcome]:
    records: list[InstructionRecord] = []
    for conv in sorted(split.conversations, key=lambda c: c.id):
        for u in conv.utterances:
            records.append(compile_single_stage_record(conv, u.index, cfg.variant,
                                                       mode="infer", options=cfg.options))
    outcome = _run_records("single", records, cfg, cache, responder)
    erc_parses: dict[tuple[str, int], ErcParse] = {}
    ecpe_parses: dict[tuple[str, int], EcpeParse] = {}
    predictions: dict[tuple[str, int], str] = {}
    for record, result in zip(outcome.records, outcome.results):
        erc_parses[record.target] = parse_emotion_reply(result.reply)
        ecpe_parses[record.target] = parse_cause_reply(result.reply, record.target[1])
        predictions[record.target] = erc_parses[record.target].category
    outcome.parses = {"erc": erc_parses, "ecpe": ecpe_parses}
    pairs = keyed_pairs(split, erc_parses, ecpe_parses)
    return predictions, pairs, outcome


def _gold_predictions(split: DatasetSplit) -> dict[tuple[str, int], str]:
    out: dict[tuple[str, int], str] = {}
    for conv in split.conversations:
        for u in conv.utterances:
            if u.gold_emotion is None:
                raise ConfigError(f"label_source=gold but utterance {conv.id}:{u.index} "
                                  "has no gold emotion")
            out[(conv.id, u.index)] = u.gold_emotion
    return out


def _quality_histogram(erc_parses: Mapping[tuple[str, int], ErcParse],
                       ecpe_parses: Mapping[tuple[str, int], EcpeParse]) -> dict[str, int]:
    hist = {"exact": 0, "normalized": 0, "fallback": 0,
            "dropped_indices": 0, "explicit_none": 0}
    for parse in erc_parses.values():
        hist[parse.quality] += 1
    for parse in ecpe_parses.values():
        hist["dropped_indices"] += parse.dropped_out_of_window
        hist["explicit_none"] += int(parse.explicit_none)
    return hist


def run_full(cfg: PipelineConfig, responder: Responder | None = None) -> RunReport:
    """Execute the configured stages end to end and write all artifacts.

    Configuration problems fail fast before any network activity; per-record
    endpoint failures are recorded in the report, never fatal.
    """
    if cfg.eval_path is None:
        raise ConfigError("run requires an eval dataset")
    if not cfg.mock and responder is None and not cfg.endpoint.base_url:
        raise ConfigError("run requires an endpoint base_url or a mock responder")
    split = load_split(cfg.eval_path)
    cache = ResponseCache(cfg.cache_dir)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if responder is None and cfg.mock:
        style = "single" if cfg.strategy == "single" else "two-stage"
        responder = build_responder(cfg.mock, split, style=style)

    stages: list[StageOutcome] = []
    erc_parses: dict[tuple[str, int], ErcParse] = {}
    ecpe_parses: dict[tuple[str, int], EcpeParse] = {}
    pairs_by_conv: dict[str, list[EmotionCausePair]] = {}

    if cfg.strategy == "single":
        predictions, pairs_by_conv, outcome = _run_single_stage(split, cfg, cache, responder)
        erc_parses = outcome.parses["erc"]
        ecpe_parses = outcome.parses["ecpe"]
        stages.append(outcome)
    else:
        if cfg.label_source == "gold":
            predictions = _gold_predictions(split)
        else:
            predictions, erc_outcome = run_erc_stage(split, cfg, cache, responder)
            erc_parses = erc_outcome.parses
            stages.append(erc_outcome)
        if "ecpe" in cfg.stages:
            labeled = inject_predicted_emotions(split, predictions)
            pairs_by_conv, ecpe_outcome = run_ecpe_stage(labeled, cfg, cache, responder)
            ecpe_parses = ecpe_outcome.parses
            stages.append(ecpe_outcome)

    erc_score = None
    if all(u.gold_emotion is not None for c in split.conversations for u in c.utterances) \
            and predictions:
        gold_labels = {(c.id, u.index): u.gold_emotion
                       for c in split.conversations for u in c.utterances}
        erc_score = score_erc(gold_labels, predictions)

    pair_score = None
    gold_keyed = {c.id: list(c.gold_pairs) for c in split.conversations if c.gold_pairs}
    if gold_keyed and "ecpe" in cfg.stages:
        pair_score = score_keyed_pairs(gold_keyed, pairs_by_conv)

    report = RunReport(
        strategy=cfg.strategy,
        split_name=split.name,
        stages=stages,
        parse_quality=_quality_histogram(erc_parses, ecpe_parses),
        utterances=split.utterance_count,
        erc_predictions=len(predictions),
        ecpe_records=next((s.count for s in stages if s.name in ("ecpe", "single")), 0),
        ecpe_parsed=len(ecpe_parses),
        pair_count=sum(len(v) for v in pairs_by_conv.values()),
        erc_score=erc_score,
        pair_score=pair_score,
        config=cfg.to_doc(),
    )
    _write_run_artifacts(out_dir, split, report, stages, predictions, pairs_by_conv)
    return report


def _write_run_artifacts(out_dir: Path, split: DatasetSplit, report: RunReport,
                         stages: Sequence[StageOutcome],
                         predictions: Mapping[tuple[str, int], str],
                         pairs_by_conv: Mapping[str, list[EmotionCausePair]]) -> None:
    for outcome in stages:
        write_records_jsonl(outcome.records, out_dir / f"{outcome.name}_records.jsonl")
        _write_replies_jsonl(outcome.results, out_dir / f"{outcome.name}_replies.jsonl")
    write_report_document(predictions_to_doc(split.name, predictions),
                          out_dir / "predictions.json")
    write_report_document(pairs_to_doc(split.name, pairs_by_conv), out_dir / "pairs.json")
    if report.erc_score is not None:
        write_report_document(report.erc_score.to_doc(), out_dir / "erc_score.json")
    if report.pair_score is not None:
        write_report_document(report.pair_score.to_doc(), out_dir / "score.json")
        write_score_csv(report.pair_score, out_dir / "scores.csv")
        render_score_figure(report.pair_score, out_dir / "score.png",
                            title=f"Pair extraction scores ({split.name})")
    write_report_document(report.to_doc(include_timings=True), out_dir / "run_report.json")


# ---------------------------------------------------------------------------
# Training asset emission
# ---------------------------------------------------------------------------

def emit_training_assets(
    split: DatasetSplit,
    stage: str,
    variant: TemplateVariant,
    out_dir: str | Path,
    options: CompileOptions = DEFAULT_OPTIONS,
    manifest_overrides: Mapping | None = None,
) -> tuple[Path, Path]:
    """Emit a training JSONL plus its manifest for an external fine-tuning run."""
    if not split.conversations:
        raise ConfigError(f"split {split.name!r} is empty; nothing to train on")
    out_dir = Path(out_dir)
    records = compile_split(split, stage, variant, label_source="gold",
                            mode="train", options=options)
    jsonl_path = out_dir / f"{stage.lower()}_{split.name}.jsonl"
    render_training_file(records, jsonl_path)
    manifest = TrainingManifest(
        datasets=({"path": jsonl_path.name, "sha256": sha256_file(jsonl_path),
                   "records": len(records)},),
        template_version=wording_version(),
        **dict(manifest_overrides or {}),
    )
    manifest_path = out_dir / f"{stage.lower()}_{split.name}.manifest.json"
    write_report_document(manifest.to_doc(), manifest_path)
    return jsonl_path, manifest_path


def build_iterative_dataset(
    original_train: DatasetSplit,
    inference_split: DatasetSplit,
    inferred_pairs: Mapping[str, Iterable[EmotionCausePair]],
    path: str | Path,
    variant: TemplateVariant | None = None,
    options: CompileOptions = DEFAULT_OPTIONS,
    inference_label_source: str = "predicted",
) -> Path:
    """Re-emit the cause-extraction training set augmented with inferred pairs.

    Gold-derived records come first and keep their plain ids; records derived
    from the model's own inferred pairs follow, tagged with a ":selftrain" id
    suffix so the two origins never mix. Gold expected outputs are never
    overwritten. With no inferred pairs the output is byte-identical to the
    gold-only emission.
    """
    variant = variant or TemplateVariant()
    inferred: dict[str, list[EmotionCausePair]] = {
        conv_id: list(pairs) for conv_id, pairs in inferred_pairs.items()
    }
    by_conv = {c.id: c for c in inference_split.conversations}
    for conv_id, pairs in inferred.items():
        conv = by_conv.get(conv_id)
        if conv is None:
            raise CorpusError(f"inferred pairs reference unknown conversation {conv_id!r}")
        for p in pairs:
            for idx in (p.emotion_index, p.cause_index):
                if not 1 <= idx <= conv.n:
                    raise CorpusError(f"inferred pair {p.as_list()} references missing "
                                      f"utterance {idx} of {conv_id!r}")
            if p.category == NEUTRAL:
                raise CorpusError(f"inferred pair {p.as_list()} carries the neutral category")

    records = compile_split(original_train, STAGE_ECPE, variant, label_source="gold",
                            mode="train", options=options)
    for conv_id in sorted(inferred):
        conv = by_conv[conv_id]
        targets = sorted({p.emotion_index for p in inferred[conv_id]})
        for target in targets:
            causes = sorted({p.cause_index for p in inferred[conv_id]
                             if p.emotion_index == target})
            record = compile_ecpe_record(conv, target, variant,
                                         label_source=inference_label_source,
                                         mode="infer", options=options)
            records.append(replace(
                record,
                record_id=record.record_id + ":selftrain",
                expected_output=", ".join(str(i) for i in causes),
            ))
    return render_training_file(records, path)


# ---------------------------------------------------------------------------
# Zero-shot pilot comparisons
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PilotEndpoint:
    name: str
    endpoint: EndpointConfig
    mock: str | None = None


def run_pilot(endpoints: Sequence[PilotEndpoint], split: DatasetSplit,
              cfg: PipelineConfig) -> list[dict]:
    """Score several endpoints zero-shot on one gold-annotated split.

    Every endpoint runs the same two-stage flow; rows come back ordered by
    pair weighted F1 descending, ties broken by configuration order.
    """
    if len(endpoints) < 1:
        raise ConfigError("pilot needs at least one endpoint")
    gold_keyed = {c.id: list(c.gold_pairs) for c in split.conversations if c.gold_pairs}
    if not gold_keyed:
        raise ConfigError("pilot split carries no gold pairs to score against")
    gold_labels = {}
    for conv in split.conversations:
        for u in conv.utterances:
            if u.gold_emotion is None:
                raise ConfigError(f"pilot split lacks gold label for {conv.id}:{u.index}")
            gold_labels[(conv.id, u.index)] = u.gold_emotion

    rows = []
    for index, entry in enumerate(endpoints):
        sub_cfg = PipelineConfig(
            variant=cfg.variant,
            label_source="predicted",
            strategy="labeled",
            endpoint=entry.endpoint,
            cache_dir=Path(cfg.cache_dir) / f"pilot_{index:02d}",
            out_dir=cfg.out_dir,
            options=cfg.options,
        )
        responder = build_responder(entry.mock, split) if entry.mock else None
        cache = ResponseCache(sub_cfg.cache_dir)
        predictions, erc_outcome = run_erc_stage(split, sub_cfg, cache, responder)
        labeled = inject_predicted_emotions(split, predictions)
        pairs, ecpe_outcome = run_ecpe_stage(labeled, sub_cfg, cache, responder)
        erc_report = score_erc(gold_labels, predictions)
        pair_report = score_keyed_pairs(gold_keyed, pairs)
        rows.append({
            "index": index,
            "name": entry.name,
            "model": entry.endpoint.model_name,
            "erc_weighted_f1": round(erc_report.weighted_f1, 4),
            "pair_weighted_f1": round(pair_report.weighted_f1, 4),
            "erc_score": erc_report.to_doc(),
            "pair_score": pair_report.to_doc(),
            "records": erc_outcome.count + ecpe_outcome.count,
        })
    rows.sort(key=lambda row: (-row["pair_weighted_f1"], row["index"]))
    return rows
