"""emocause: emotion-cause pair extraction pipelines for chat-completion models.

Compile conversation corpora into instruction records, drive any
chat-completions endpoint over them with caching and bounded concurrency,
parse the replies into (emotion utterance, category, cause utterance) pairs,
score them with gold-support-weighted F1, and emit datasets plus manifests
for external fine-tuning rounds.
"""

from .corpus import (
    EMOTION_CATEGORIES,
    NEUTRAL,
    NON_NEUTRAL_CATEGORIES,
    Conversation,
    CorpusError,
    DatasetSplit,
    EmotionCausePair,
    Utterance,
    ValidationReport,
    attach_video_descriptions,
    convert_official,
    inject_predicted_emotions,
    load_split,
    merge_splits,
    serialize_split,
    validate_split,
    write_split,
)
from .inference import (
    AuthenticationError,
    CompletionResult,
    EndpointConfig,
    EndpointError,
    GoldOracleResponder,
    ResponseCache,
    complete_all,
    complete_one,
)
from .metrics import MetricsError, ScoreReport, score_erc, score_keyed_pairs, score_pairs
from .parsing import EcpeParse, ErcParse, assemble_pairs, parse_cause_reply, parse_emotion_reply
from .pipeline import (
    ConfigError,
    PipelineConfig,
    RunReport,
    TrainingManifest,
    build_iterative_dataset,
    emit_training_assets,
    run_ecpe_stage,
    run_erc_stage,
    run_full,
    run_pilot,
)
from .templates import (
    CompileOptions,
    InstructionRecord,
    TemplateError,
    TemplateVariant,
    compile_ecpe_record,
    compile_erc_record,
    compile_split,
    format_utterance_line,
    render_training_file,
)

__version__ = "0.1.0"
