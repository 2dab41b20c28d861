"""Post cleaning, de-duplication and relevant/irrelevant labelling.

Labels come either from the multinomial Naive Bayes model trained here or
from a ``post_id,label`` file produced by an external classifier.
"""

from __future__ import annotations

import csv
import dataclasses
import html
import io
import json
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .ingestion import FileFormatError, Post, RowError, _decode

logger = logging.getLogger(__name__)

RELEVANT = "relevant"
IRRELEVANT = "irrelevant"
LABELS = (IRRELEVANT, RELEVANT)

MODEL_FORMAT = "avianwatch-multinomial-nb"
MODEL_VERSION = 1

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION = re.compile(r"@\w+:?")
_HASHTAG = re.compile(r"#(\w+)")
_SPACE = re.compile(r"\s+")
_TOKEN = re.compile(r"[a-z0-9]+")


def normalize_text(raw: str, keep_hashtag_stems: bool = True) -> str:
    text = html.unescape(raw)
    text = _URL.sub(" ", text)
    text = _MENTION.sub(" ", text)
    text = _HASHTAG.sub(r"\1" if keep_hashtag_stems else " ", text)
    return _SPACE.sub(" ", text.lower()).strip()


def tokenize(text: str) -> list[str]:
    """Alphanumeric runs of length >= 2; subtype codes like h5n1 stay whole."""
    return [t for t in _TOKEN.findall(text.lower()) if len(t) >= 2]


def dedupe(posts: Sequence[Post]) -> list[Post]:
    """Drop exact duplicates (keeping the earliest) and redundant reposts.

    Texts are compared as given, so normalize first. A post reading
    ``"rt <text>"`` is dropped when ``<text>`` is itself present.
    """
    earliest: dict[str, int] = {}
    for i, p in enumerate(posts):
        j = earliest.get(p.text)
        if j is None or p.timestamp < posts[j].timestamp:
            earliest[p.text] = i
    texts = set(earliest)
    keep = []
    for text, i in earliest.items():
        if text.startswith("rt ") and text[3:].strip() in texts:
            continue
        keep.append(i)
    return [posts[i] for i in sorted(keep)]


# ------------------------------------------------------------------ corpus


@dataclass(frozen=True)
class LabeledCorpus:
    items: tuple[tuple[str, str], ...]

    def __post_init__(self):
        for text, label in self.items:
            if label not in LABELS:
                raise ValueError(f"label must be one of {LABELS}, got {label!r}")
            if not text.strip():
                raise ValueError("corpus contains an empty text")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def texts(self) -> list[str]:
        return [t for t, _ in self.items]

    @property
    def labels(self) -> list[str]:
        return [lab for _, lab in self.items]


def load_corpus(stream) -> LabeledCorpus:
    """Read a ``text,label`` CSV."""
    reader = csv.reader(io.StringIO(_decode(stream)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["text", "label"]:
        raise FileFormatError("corpus file must have header 'text,label'")
    items = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) < 2 or row[1].strip() not in LABELS:
            raise RowError(line, f"bad corpus row {row!r}")
        items.append((row[0], row[1].strip()))
    return LabeledCorpus(tuple(items))


def stratified_split(corpus: LabeledCorpus, test_fraction: float = 0.2, seed: int = 0):
    """Seeded per-class shuffle, then the last ``test_fraction`` of each class is held out."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in LABELS:
        idx = [i for i, (_, lab) in enumerate(corpus.items) if lab == label]
        order = rng.permutation(len(idx))
        n_test = int(round(test_fraction * len(idx)))
        cut = len(idx) - n_test
        train += [idx[k] for k in order[:cut]]
        test += [idx[k] for k in order[cut:]]
    train.sort()
    test.sort()
    pick = lambda ids: LabeledCorpus(tuple(corpus.items[i] for i in ids))  # noqa: E731
    return pick(train), pick(test)


# ------------------------------------------------------------------ model


@dataclass(frozen=True)
class ClassifierModel:
    vocabulary: dict[str, int]
    classes: tuple[str, ...]
    log_priors: np.ndarray  # (n_classes,)
    log_likelihoods: np.ndarray  # (n_classes, n_vocab)
    alpha: float

    def to_json(self) -> str:
        vocab = sorted(self.vocabulary, key=self.vocabulary.get)
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "alpha": self.alpha,
            "classes": list(self.classes),
            "vocabulary": vocab,
            "log_priors": [float(v) for v in self.log_priors],
            "log_likelihoods": [[float(v) for v in row] for row in self.log_likelihoods],
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> ClassifierModel:
        payload = json.loads(text)
        if payload.get("format") != MODEL_FORMAT:
            raise FileFormatError("not a serialized relevance model")
        if payload.get("version") != MODEL_VERSION:
            raise FileFormatError(f"unsupported model version {payload.get('version')}")
        vocab = {tok: i for i, tok in enumerate(payload["vocabulary"])}
        return cls(
            vocabulary=vocab,
            classes=tuple(payload["classes"]),
            log_priors=np.array(payload["log_priors"]),
            log_likelihoods=np.array(payload["log_likelihoods"]),
            alpha=float(payload["alpha"]),
        )


def train_classifier(corpus: LabeledCorpus, alpha: float = 1.0) -> ClassifierModel:
    if alpha <= 0:
        raise ValueError("smoothing alpha must be positive")
    present = set(corpus.labels)
    if present != set(LABELS):
        raise ValueError(f"training corpus needs both classes, found only {sorted(present)}")
    docs = [tokenize(t) for t in corpus.texts]
    vocab: dict[str, int] = {}
    for toks in docs:
        for tok in toks:
            vocab.setdefault(tok, len(vocab))
    counts = np.zeros((len(LABELS), len(vocab)))
    n_docs = np.zeros(len(LABELS))
    for toks, label in zip(docs, corpus.labels):
        c = LABELS.index(label)
        n_docs[c] += 1
        for tok in toks:
            counts[c, vocab[tok]] += 1
    smoothed = counts + alpha
    log_lik = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    log_priors = np.log(n_docs) - np.log(n_docs.sum())
    return ClassifierModel(vocab, LABELS, log_priors, log_lik, float(alpha))


def class_log_scores(model: ClassifierModel, text: str) -> np.ndarray:
    """Unnormalised log joint per class; out-of-vocabulary tokens are ignored."""
    scores = model.log_priors.copy()
    for tok in tokenize(text):
        j = model.vocabulary.get(tok)
        if j is not None:
            scores += model.log_likelihoods[:, j]
    return scores


def predict(model: ClassifierModel, text: str) -> tuple[str, float]:
    """Return ``(label, P(relevant | text))``."""
    scores = class_log_scores(model, text)
    log_post = scores - np.logaddexp.reduce(scores)
    label = model.classes[int(np.argmax(scores))]
    return label, float(np.exp(log_post[model.classes.index(RELEVANT)]))


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def metrics_from_labels(actual: Sequence[str], predicted: Sequence[str]) -> Metrics:
    if not actual:
        raise ValueError("cannot evaluate on an empty set")
    tp = fp = tn = fn = 0
    for a, p in zip(actual, predicted, strict=True):
        if p == RELEVANT:
            tp += a == RELEVANT
            fp += a != RELEVANT
        else:
            fn += a == RELEVANT
            tn += a != RELEVANT
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics((tp + tn) / len(actual), precision, recall, f1, tp, fp, tn, fn)


def evaluate(model: ClassifierModel, heldout: LabeledCorpus) -> Metrics:
    if len(heldout) == 0:
        raise ValueError("held-out corpus is empty")
    predicted = [predict(model, t)[0] for t in heldout.texts]
    return metrics_from_labels(heldout.labels, predicted)


def classify_posts(model: ClassifierModel, posts: Iterable[Post]) -> list[Post]:
    return [dataclasses.replace(p, relevance=predict(model, p.text)[0]) for p in posts]


# -------------------------------------------------------- external labels


def read_labels(labels_stream) -> dict[str, str]:
    reader = csv.reader(io.StringIO(_decode(labels_stream)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["post_id", "label"]:
        raise FileFormatError("labels file must have header 'post_id,label'")
    labels: dict[str, str] = {}
    for line, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) < 2:
            raise RowError(line, "expected post_id,label")
        label = row[1].strip()
        if label not in LABELS:
            raise RowError(line, f"label {label!r} is not one of {LABELS}")
        labels[row[0].strip()] = label
    return labels


def apply_external_labels(posts: Sequence[Post], labels_stream) -> tuple[list[Post], list[str]]:
    """Attach labels keyed by post id.

    Returns the posts (matched ones with ``relevance`` set, others untouched)
    and the label ids that matched no post.
    """
    labels = read_labels(labels_stream)
    out = []
    matched = set()
    for p in posts:
        label = labels.get(p.id)
        if label is None:
            out.append(p)
        else:
            matched.add(p.id)
            out.append(dataclasses.replace(p, relevance=label))
    unmatched = [pid for pid in labels if pid not in matched]
    if unmatched:
        logger.warning("%d label ids matched no post", len(unmatched))
    return out, unmatched
