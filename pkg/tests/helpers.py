"""Shared test utilities: independent scoring oracles, synthetic corpora,
hypothesis strategies, and an instrumented local HTTP endpoint."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import hypothesis.strategies as st

from emocause.corpus import (
    EMOTION_CATEGORIES,
    NON_NEUTRAL_CATEGORIES,
    Conversation,
    DatasetSplit,
    EmotionCausePair,
    Utterance,
)

_SPEAKERS = ("Alex", "Bo", "Casey", "Dana", "Eli")
_WORDS = ("well", "sure", "maybe", "really", "look", "fine", "today", "again",
          "sorry", "great", "why", "stop", "wait", "listen", "right", "wow")


# ---------------------------------------------------------------------------
# Brute-force scoring oracles (written before the scorer; loops, no sets)
# ---------------------------------------------------------------------------

def _dedupe(items):
    out = []
    for item in items:
        found = False
        for other in out:
            if other == item:
                found = True
                break
        if not found:
            out.append(item)
    return out


def brute_force_pair_score(gold, pred):
    """Weighted-average F1 over pair triples by explicit counting loops."""
    g = _dedupe(list(gold))
    p = _dedupe(list(pred))
    assert g, "oracle needs non-empty gold"
    categories = []
    for pair in g + p:
        if pair.category not in categories:
            categories.append(pair.category)
    per = {}
    weighted_num = 0.0
    for cat in categories:
        tp = fp = fn = 0
        for pair in p:
            if pair.category != cat:
                continue
            hit = False
            for other in g:
                if other == pair:
                    hit = True
                    break
            if hit:
                tp += 1
            else:
                fp += 1
        for pair in g:
            if pair.category != cat:
                continue
            hit = False
            for other in p:
                if other == pair:
                    hit = True
                    break
            if not hit:
                fn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per[cat] = (precision, recall, f1, tp, fp, fn)
        weighted_num += (tp + fn) * f1
    return weighted_num / len(g), per


def brute_force_erc_score(gold, pred):
    """Weighted-average F1 over per-target labels by explicit counting loops."""
    assert set(gold) == set(pred)
    categories = []
    for label in list(gold.values()) + list(pred.values()):
        if label not in categories:
            categories.append(label)
    weighted_num = 0.0
    for cat in categories:
        tp = fp = fn = 0
        for key in gold:
            if pred[key] == cat and gold[key] == cat:
                tp += 1
            elif pred[key] == cat:
                fp += 1
            elif gold[key] == cat:
                fn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        weighted_num += (tp + fn) * f1
    return weighted_num / len(gold)


def random_pair_instance(rng: random.Random):
    """One random scoring instance: <=8 utterances, <=6 gold, <=6 predicted."""
    n = rng.randint(1, 8)
    def pair():
        return EmotionCausePair(rng.randint(1, n),
                                rng.choice(NON_NEUTRAL_CATEGORIES),
                                rng.randint(1, n))
    gold = [pair() for _ in range(rng.randint(1, 6))]
    pred = []
    for _ in range(rng.randint(0, 6)):
        if gold and rng.random() < 0.4:
            pred.append(rng.choice(gold))  # encourage true positives
        else:
            pred.append(pair())
    return gold, pred


# ---------------------------------------------------------------------------
# Synthetic corpora (gold causes follow the inclusive-window convention)
# ---------------------------------------------------------------------------

def make_conversation(rng: random.Random, conv_id: str, max_n: int = 8) -> Conversation:
    n = rng.randint(1, max_n)
    utterances = []
    for i in range(1, n + 1):
        text = " ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, 6)))
        utterances.append(Utterance(
            index=i,
            speaker=rng.choice(_SPEAKERS),
            text=text,
            gold_emotion=rng.choice(EMOTION_CATEGORIES),
        ))
    pairs = []
    for u in utterances:
        if u.gold_emotion == "neutral":
            continue
        causes = rng.sample(range(1, u.index + 1), k=min(u.index, rng.randint(0, 2)))
        pairs.extend(EmotionCausePair(u.index, u.gold_emotion, c) for c in sorted(causes))
    return Conversation(id=conv_id, utterances=tuple(utterances), gold_pairs=tuple(pairs))


def make_split(rng: random.Random, n_conversations: int, name: str = "synthetic",
               max_n: int = 8) -> DatasetSplit:
    conversations = tuple(make_conversation(rng, f"conv_{i:03d}", max_n)
                          for i in range(n_conversations))
    return DatasetSplit(name=name, conversations=conversations)


def gold_split_with_pairs(rng: random.Random, n_conversations: int,
                          name: str = "synthetic") -> DatasetSplit:
    """Like make_split but guaranteed to carry at least one gold pair."""
    while True:
        split = make_split(rng, n_conversations, name)
        if split.gold_pair_count > 0:
            return split


# ---------------------------------------------------------------------------
# Hypothesis strategies
# ---------------------------------------------------------------------------

_line_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")),
    min_size=1, max_size=24,
)


@st.composite
def conversations(draw, max_n: int = 8, conv_id: str = "conv_h") -> Conversation:
    n = draw(st.integers(1, max_n))
    utterances = []
    for i in range(1, n + 1):
        utterances.append(Utterance(
            index=i,
            speaker=draw(st.sampled_from(_SPEAKERS)),
            text=draw(_line_text),
            gold_emotion=draw(st.sampled_from(EMOTION_CATEGORIES)),
        ))
    pairs = []
    for u in utterances:
        if u.gold_emotion == "neutral":
            continue
        causes = draw(st.lists(st.integers(1, u.index), max_size=3, unique=True))
        pairs.extend(EmotionCausePair(u.index, u.gold_emotion, c) for c in sorted(causes))
    return Conversation(id=conv_id, utterances=tuple(utterances), gold_pairs=tuple(pairs))


@st.composite
def labeled_splits(draw, max_conversations: int = 4) -> DatasetSplit:
    count = draw(st.integers(1, max_conversations))
    convs = tuple(draw(conversations(conv_id=f"conv_{i}")) for i in range(count))
    return DatasetSplit(name="hypothesis", conversations=convs)


# ---------------------------------------------------------------------------
# Instrumented local endpoint
# ---------------------------------------------------------------------------

class InstrumentedEndpoint:
    """Local chat-completions stub that tracks concurrent open requests.

    reply_fn maps the incoming prompt to reply text; status_script yields
    HTTP statuses for successive requests (then 200 forever). delay holds
    each request open to make concurrency observable.
    """

    def __init__(self, reply_fn=None, status_script=(), delay: float = 0.0,
                 malformed: bool = False):
        self.reply_fn = reply_fn or (lambda prompt: "ok")
        self.status_script = list(status_script)
        self.delay = delay
        self.malformed = malformed
        self.lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.requests = 0
        self.server: ThreadingHTTPServer | None = None
        self.thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        assert self.server is not None
        host, port = self.server.server_address[:2]
        return f"http://127.0.0.1:{port}/v1/chat/completions"

    def __enter__(self) -> "InstrumentedEndpoint":
        endpoint = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 - http.server API
                import time as _time
                with endpoint.lock:
                    endpoint.requests += 1
                    endpoint.in_flight += 1
                    endpoint.max_in_flight = max(endpoint.max_in_flight, endpoint.in_flight)
                    status = endpoint.status_script.pop(0) if endpoint.status_script else 200
                try:
                    if endpoint.delay:
                        _time.sleep(endpoint.delay)
                    length = int(self.headers.get("Content-Length", "0"))
                    body = json.loads(self.rfile.read(length) or b"{}")
                    prompt = ""
                    for message in body.get("messages", []):
                        if message.get("role") == "user":
                            prompt = message.get("content", "")
                    if status != 200:
                        payload = json.dumps({"error": f"scripted {status}"}).encode()
                    elif endpoint.malformed:
                        payload = json.dumps({"unexpected": True}).encode()
                    else:
                        reply = endpoint.reply_fn(prompt)
                        payload = json.dumps(
                            {"choices": [{"message": {"role": "assistant", "content": reply}}]}
                        ).encode()
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                finally:
                    with endpoint.lock:
                        endpoint.in_flight -= 1

            def log_message(self, *args):  # silence
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        return self

    def __exit__(self, *exc_info) -> None:
        assert self.server is not None
        self.server.shutdown()
        self.server.server_close()


def prompt_reply_map_for_gold(split: DatasetSplit, cfg_variant=None) -> dict[str, str]:
    """Map every infer-mode prompt of a two-stage run to its gold answer."""
    from emocause.templates import (
        STAGE_ECPE,
        STAGE_ERC,
        TemplateVariant,
        compile_split,
        expected_cause_output,
    )
    from emocause.corpus import inject_predicted_emotions

    variant = cfg_variant or TemplateVariant()
    mapping: dict[str, str] = {}
    for record in compile_split(split, STAGE_ERC, variant, mode="infer"):
        conv = split.conversation(record.target[0])
        mapping[record.prompt] = conv.utterance(record.target[1]).gold_emotion
    gold_predictions = {(c.id, u.index): u.gold_emotion
                        for c in split.conversations for u in c.utterances}
    labeled = inject_predicted_emotions(split, gold_predictions)
    for record in compile_split(labeled, STAGE_ECPE, variant,
                                label_source="predicted", mode="infer"):
        conv = split.conversation(record.target[0])
        mapping[record.prompt] = expected_cause_output(conv, record.target[1])
    return mapping
