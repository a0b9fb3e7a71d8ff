"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 endpoint failure after retries.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import (
    CorpusError,
    attach_video_descriptions,
    convert_official,
    inject_predicted_emotions,
    load_split,
    merge_splits,
    validate_split,
    write_split,
)
from .inference import (
    AuthenticationError,
    EndpointConfig,
    EndpointError,
    ResponseCache,
    build_responder,
    complete_all,
)
from .ioutil import atomic_write_text, write_report_document
from .metrics import MetricsError, score_keyed_pairs
from .parsing import ParseConsistencyError, parse_cause_reply, parse_emotion_reply
from .pipeline import (
    ConfigError,
    PilotEndpoint,
    PipelineConfig,
    build_iterative_dataset,
    emit_training_assets,
    load_pairs_document,
    load_predictions,
    run_full,
    run_pilot,
)
from .reporting import (
    render_pilot_figure,
    render_score_figure,
    write_pilot_csv,
    write_score_csv,
)
from .templates import (
    CompileOptions,
    TemplateError,
    TemplateVariant,
    compile_split,
    read_records_jsonl,
    record_from_json_obj,
    render_training_file,
    write_records_jsonl,
)

log = logging.getLogger("emocause")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_ENDPOINT = 3


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="pipeline config file (JSON)")
    parser.add_argument("--out-dir", type=Path, help="directory for emitted artifacts")
    parser.add_argument("--cache-dir", type=Path, help="response cache directory")
    parser.add_argument("--variant", choices=["task", "task+example", "task+example+candidate"],
                        help="template structure")
    parser.add_argument("--modality", choices=["text", "text+video"], help="template modality")
    parser.add_argument("--mock-endpoint", metavar="REPLIES|gold|neutral",
                        help="answer locally instead of calling an endpoint")


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    doc = {}
    base_dir = None
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        base_dir = Path(args.config).resolve().parent
    cfg = PipelineConfig.from_dict(doc, base_dir=base_dir)

    # flags override the config file
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    if getattr(args, "cache_dir", None):
        cfg.cache_dir = args.cache_dir
    if getattr(args, "variant", None) or getattr(args, "modality", None):
        cfg.variant = TemplateVariant(
            structure=args.variant or cfg.variant.structure,
            modality=args.modality or cfg.variant.modality,
        )
    if getattr(args, "mock_endpoint", None):
        cfg.mock = args.mock_endpoint
    for attr, key in (("eval_dataset", "eval_path"), ("train", "train_path"),
                      ("trial", "trial_path")):
        value = getattr(args, attr, None)
        if value:
            setattr(cfg, key, value)
    if getattr(args, "label_source", None):
        cfg.label_source = args.label_source
    if getattr(args, "strategy", None):
        cfg.strategy = args.strategy
    if getattr(args, "endpoint_url", None):
        cfg.endpoint = EndpointConfig(
            base_url=args.endpoint_url,
            model_name=getattr(args, "model", None) or cfg.endpoint.model_name,
            auth_env_var=getattr(args, "auth_env_var", None) or cfg.endpoint.auth_env_var,
            max_retries=cfg.endpoint.max_retries if getattr(args, "max_retries", None) is None
            else args.max_retries,
            max_in_flight=cfg.endpoint.max_in_flight if getattr(args, "max_in_flight", None) is None
            else args.max_in_flight,
        )
    return cfg


def _variant(args: argparse.Namespace) -> TemplateVariant:
    return TemplateVariant(structure=args.variant or "task+example+candidate",
                           modality=args.modality or "text")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    split = None
    try:
        split = load_split(args.dataset)
    except CorpusError as exc:
        print(f"INVALID {args.dataset}: {exc}")
        return EXIT_VALIDATION
    report = validate_split(split)
    for finding in report.findings:
        where = finding.conversation_id or "-"
        idx = "" if finding.utterance_index is None else f" u{finding.utterance_index}"
        print(f"{finding.severity.upper()} [{finding.rule}] {where}{idx}: {finding.message}")
    print(f"OK {args.dataset}: {len(split)} conversations, "
          f"{split.utterance_count} utterances, {split.gold_pair_count} gold pairs, "
          f"{len(report.warnings)} warnings")
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_convert(args: argparse.Namespace) -> int:
    split = convert_official(args.official, args.split)
    if args.descriptions:
        split = attach_video_descriptions(split, args.descriptions)
    write_split(split, args.output)
    print(f"wrote {args.output}: {len(split)} conversations, {split.utterance_count} utterances")
    return EXIT_OK


def cmd_compile(args: argparse.Namespace) -> int:
    split = load_split(args.dataset)
    if args.predictions:
        split = inject_predicted_emotions(split, load_predictions(args.predictions))
    if args.descriptions:
        split = attach_video_descriptions(split, args.descriptions)
    options = CompileOptions(max_prompt_chars=args.max_prompt_chars)
    records = compile_split(split, args.stage.upper(), _variant(args),
                            label_source=args.label_source, mode=args.mode, options=options)
    if args.mode == "train":
        render_training_file(records, args.output)
    else:
        write_records_jsonl(records, args.output)
    truncated = sum(1 for r in records if r.dropped_lines)
    print(f"wrote {args.output}: {len(records)} records"
          + (f" ({truncated} truncated)" if truncated else ""))
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    records = [record_from_json_obj(obj) for obj in read_records_jsonl(args.records)]
    responder = None
    if cfg.mock:
        split = load_split(args.dataset) if args.dataset else None
        responder = build_responder(cfg.mock, split)
    elif not cfg.endpoint.base_url:
        raise ConfigError("infer requires an endpoint base_url or --mock-endpoint")
    cache = ResponseCache(cfg.cache_dir)
    results = complete_all(records, cfg.endpoint, cache, responder)
    out_path = args.output
    lines = [json.dumps({"id": r.record_id, "reply": r.reply, "error": r.error},
                        ensure_ascii=False) for r in results]
    atomic_write_text(out_path, "".join(line + "\n" for line in lines))
    hits = sum(1 for r in results if r.from_cache)
    errors = sum(1 for r in results if r.error)
    print(f"wrote {out_path}: {len(results)} replies ({hits} cached, {errors} errors)")
    if results and errors == len(results):
        print("every request failed; endpoint unusable", file=sys.stderr)
        return EXIT_ENDPOINT
    return EXIT_OK


def cmd_parse(args: argparse.Namespace) -> int:
    records = {obj["id"]: obj for obj in read_records_jsonl(args.records)}
    erc_out: dict[str, dict] = {}
    ecpe_out: dict[str, dict] = {}
    hist = {"exact": 0, "normalized": 0, "fallback": 0, "dropped_indices": 0, "explicit_none": 0}
    with open(args.replies, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            record = records.get(obj["id"])
            if record is None:
                raise ConfigError(f"reply {obj['id']!r} has no matching record")
            rec = record_from_json_obj(record)
            reply = obj.get("reply", "")
            if rec.stage == "ERC":
                parse = parse_emotion_reply(reply)
                erc_out[rec.record_id] = {"category": parse.category, "quality": parse.quality}
                hist[parse.quality] += 1
            else:
                parse = parse_cause_reply(reply, rec.target[1])
                ecpe_out[rec.record_id] = {
                    "indices": list(parse.indices),
                    "dropped_out_of_window": parse.dropped_out_of_window,
                    "explicit_none": parse.explicit_none,
                }
                hist["dropped_indices"] += parse.dropped_out_of_window
                hist["explicit_none"] += int(parse.explicit_none)
    doc = {"parser_version": "1", "erc": erc_out, "ecpe": ecpe_out, "histogram": hist}
    write_report_document(doc, args.output)
    print(f"wrote {args.output}: {len(erc_out)} emotion parses, {len(ecpe_out)} cause parses")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    split = load_split(args.gold)
    gold_keyed = {c.id: list(c.gold_pairs) for c in split.conversations if c.gold_pairs}
    if not gold_keyed:
        raise CorpusError(f"gold dataset {args.gold} carries no pairs to score against")
    pred = load_pairs_document(args.pairs)
    report = score_keyed_pairs(gold_keyed, pred)
    out_dir = args.out_dir or Path(".")
    write_report_document(report.to_doc(), out_dir / "score.json")
    write_score_csv(report, out_dir / "scores.csv")
    render_score_figure(report, out_dir / "score.png",
                        title=f"Pair extraction scores ({split.name})")
    print(f"weighted F1 = {report.weighted_f1:.4f} "
          f"(gold {report.gold_total}, predicted {report.pred_total})")
    print(f"wrote {out_dir / 'score.json'}, {out_dir / 'scores.csv'}, {out_dir / 'score.png'}")
    return EXIT_OK


def cmd_emit_train(args: argparse.Namespace) -> int:
    split = load_split(args.train)
    if args.trial:
        split = merge_splits(split, load_split(args.trial), args.merged_name)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    jsonl, manifest = emit_training_assets(split, args.stage.upper(), _variant(args),
                                           args.out_dir or Path("."),
                                           manifest_overrides=overrides)
    print(f"wrote {jsonl} and {manifest}")
    return EXIT_OK


def cmd_iterate(args: argparse.Namespace) -> int:
    train = load_split(args.train)
    inference = load_split(args.inference)
    if args.predictions:
        inference = inject_predicted_emotions(inference, load_predictions(args.predictions))
        label_source = "predicted"
    else:
        label_source = "gold"
    inferred = load_pairs_document(args.pairs)
    out_dir = args.out_dir or Path(".")
    path = build_iterative_dataset(train, inference, inferred,
                                   out_dir / "ecpe_iterative.jsonl",
                                   variant=_variant(args),
                                   inference_label_source=label_source)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_pilot(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    split = load_split(args.dataset)
    try:
        doc = json.loads(Path(args.endpoints).read_text(encoding="utf-8"))
        entries = doc["endpoints"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read endpoints file {args.endpoints}: {exc}") from exc
    endpoints = []
    for i, entry in enumerate(entries):
        entry = dict(entry)
        name = entry.pop("name", f"endpoint-{i}")
        mock = entry.pop("mock", None)
        try:
            endpoints.append(PilotEndpoint(name=name, endpoint=EndpointConfig(**entry), mock=mock))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad endpoint entry {name!r}: {exc}") from exc

    rows = run_pilot(endpoints, split, cfg)
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_document({"split": split.name, "endpoints": rows}, out_dir / "pilot.json")
    write_pilot_csv(rows, out_dir / "pilot.csv")
    render_pilot_figure(rows, out_dir / "pilot.png",
                        title=f"Zero-shot comparison ({split.name})")
    for rank, row in enumerate(rows, start=1):
        print(f"{rank}. {row['name']} ({row['model']}): pairs {row['pair_weighted_f1']:.4f}, "
              f"labels {row['erc_weighted_f1']:.4f}")
    print(f"wrote {out_dir / 'pilot.json'}, {out_dir / 'pilot.csv'}, {out_dir / 'pilot.png'}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    report = run_full(cfg)
    if report.pair_score is not None:
        print(f"pair weighted F1 = {report.pair_score.weighted_f1:.4f}")
    if report.erc_score is not None:
        print(f"label weighted F1 = {report.erc_score.weighted_f1:.4f}")
    print(f"{report.pair_count} pairs from {report.utterances} utterances; "
          f"cache hit rate {report.cache_hit_rate:.0%}; artifacts in {cfg.out_dir}")
    dead = report.failed_stage()
    if dead:
        print(f"stage {dead!r}: every request failed; endpoint unusable", file=sys.stderr)
        return EXIT_ENDPOINT
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emocause",
        description="Compile, infer, parse, and score emotion-cause pair extraction pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a canonical conversation file")
    p.add_argument("dataset", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("convert", help="convert an official release file to the canonical schema")
    p.add_argument("official", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--split", required=True, help="split name to record in the file")
    p.add_argument("--descriptions", type=Path, help="video description sidecar to attach")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("compile", help="compile instruction records from a dataset")
    _common_flags(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--stage", choices=["erc", "ecpe"], required=True)
    p.add_argument("--mode", choices=["train", "infer"], default="infer")
    p.add_argument("--label-source", choices=["gold", "predicted", "none"], default="gold")
    p.add_argument("--predictions", type=Path, help="predictions document to inject first")
    p.add_argument("--descriptions", type=Path, help="video description sidecar to attach")
    p.add_argument("--max-prompt-chars", type=int, default=8192)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("infer", help="complete compiled records against an endpoint")
    _common_flags(p)
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--dataset", type=Path, help="dataset backing the gold mock responder")
    p.add_argument("--endpoint-url", help="chat-completions endpoint URL")
    p.add_argument("--model", help="model name sent to the endpoint")
    p.add_argument("--auth-env-var", help="environment variable holding the bearer token")
    p.add_argument("--max-retries", type=int)
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("parse", help="parse reply files into labels and cause indices")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--replies", type=Path, required=True)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("score", help="score a predicted pair list against gold")
    p.add_argument("--gold", type=Path, required=True, help="gold canonical dataset")
    p.add_argument("--pairs", type=Path, required=True, help="predicted pairs document")
    p.add_argument("--out-dir", type=Path)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("emit-train", help="emit a training JSONL and manifest")
    _common_flags(p)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--trial", type=Path, help="optional split merged into the training data")
    p.add_argument("--merged-name", default="train+trial")
    p.add_argument("--stage", choices=["erc", "ecpe"], required=True)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_emit_train)

    p = sub.add_parser("iterate", help="re-emit training data augmented with inferred pairs")
    _common_flags(p)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--inference", type=Path, required=True,
                   help="dataset the inferred pairs refer to")
    p.add_argument("--pairs", type=Path, required=True, help="inferred pairs document")
    p.add_argument("--predictions", type=Path,
                   help="predictions to inject into the inference dataset")
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("pilot", help="compare several endpoints zero-shot on one dataset")
    _common_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--endpoints", type=Path, required=True,
                   help='JSON file: {"endpoints": [{"name", "mock", ...endpoint fields}]}')
    p.set_defaults(func=cmd_pilot)

    p = sub.add_parser("run", help="run the full pipeline on an eval dataset")
    _common_flags(p)
    p.add_argument("--eval", dest="eval_dataset", type=Path)
    p.add_argument("--label-source", choices=["gold", "predicted"])
    p.add_argument("--strategy", choices=["labeled", "independent", "single"])
    p.add_argument("--endpoint-url", help="chat-completions endpoint URL")
    p.add_argument("--model", help="model name sent to the endpoint")
    p.add_argument("--auth-env-var", help="environment variable holding the bearer token")
    p.add_argument("--max-retries", type=int)
    p.add_argument("--max-in-flight", type=int)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AuthenticationError as exc:
        print(f"authentication error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except EndpointError as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (CorpusError, MetricsError, ParseConsistencyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, TemplateError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
