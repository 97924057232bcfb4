"""Tokenisation, AG News CSV loading and a synthetic stand-in corpus.

Reserved ids: ``PAD_ID = 0`` and ``CLS_ID = 1``. Words take ids from 2 in
descending frequency order (ties broken alphabetically) and the
out-of-vocabulary id comes right after the last word.
"""

from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DegenerateInputError, DimensionError, ParseError
from .model import CLS_ID, PAD_ID
from .tensor_core import make_rng

MAX_VOCAB = 30_000
AGNEWS_CLASSES = 4
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def split_words(text, lowercase=True):
    if lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


class Vocabulary:
    """Word to id mapping with ``[PAD]``, ``[CLS]`` and an OOV slot."""

    def __init__(self, token_to_id, lowercase=True):
        ids = list(token_to_id.values())
        if len(set(ids)) != len(ids):
            raise ConfigError("vocabulary ids must be unique")
        if any(i in (PAD_ID, CLS_ID) for i in ids):
            raise ConfigError(f"ids {PAD_ID} and {CLS_ID} are reserved for [PAD] and [CLS]")
        self.token_to_id = dict(token_to_id)
        self.lowercase = lowercase
        self.oov_id = max(ids, default=CLS_ID) + 1

    @classmethod
    def build(cls, texts, max_size=MAX_VOCAB, lowercase=True, min_count=1):
        counts = Counter()
        for text in texts:
            counts.update(split_words(text, lowercase))
        ranked = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
        return cls({w: i + 2 for i, w in enumerate(ranked[:max_size])}, lowercase)

    def __len__(self):
        """Total id range, i.e. the embedding-table size."""
        return self.oov_id + 1

    def __contains__(self, word):
        return word in self.token_to_id

    def lookup(self, word):
        return self.token_to_id.get(word, self.oov_id)


def tokenize(text, vocab, max_len=None, pad=False):
    """``[CLS]`` followed by word ids, truncated to ``max_len`` (optionally padded)."""
    ids = [CLS_ID] + [vocab.lookup(w) for w in split_words(text, vocab.lowercase)]
    if len(ids) < 2:
        raise DegenerateInputError(f"text {text!r} has no tokens; at least one is required")
    if max_len is not None:
        if max_len < 2:
            raise ConfigError("max_len must be at least 2")
        ids = ids[:max_len]
        if pad:
            ids = ids + [PAD_ID] * (max_len - len(ids))
    return np.asarray(ids, dtype=np.int64)


@dataclass
class Dataset:
    ids: list = field(default_factory=list)
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    num_classes: int = 2
    vocab_size: int = 2

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.ids) != len(self.labels):
            raise DimensionError(f"{len(self.ids)} sequences but {len(self.labels)} labels")
        for seq in self.ids:
            if len(seq) < 2 or seq[0] != CLS_ID:
                raise DimensionError("every sequence must start with [CLS] and hold at least one token")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DimensionError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def samples(self):
        return list(zip(self.ids, self.labels.tolist()))

    def subset(self, index):
        index = np.asarray(index, dtype=np.intp)
        return Dataset([self.ids[i] for i in index], self.labels[index], self.num_classes, self.vocab_size)

    def split(self, test_fraction, rng=None):
        """Shuffle and split into disjoint ``(train, test)``."""
        order = make_rng(rng).permutation(len(self))
        n_test = int(round(test_fraction * len(self)))
        return self.subset(order[n_test:]), self.subset(order[:n_test])


def pad_batch(sequences, max_len=None):
    """Stack id sequences into ``(ids, mask)`` padded with ``PAD_ID``."""
    width = max(len(s) for s in sequences)
    if max_len is not None:
        width = min(width, max_len)
    ids = np.full((len(sequences), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(sequences), width), dtype=bool)
    for row, seq in enumerate(sequences):
        seq = np.asarray(seq)[:width]
        ids[row, : len(seq)] = seq
        mask[row, : len(seq)] = True
    return ids, mask


def iter_batches(dataset, batch_size, rng=None, shuffle=True, max_len=None):
    """Yield ``(ids, mask, labels)`` batches, reshuffled per call when ``shuffle``."""
    order = make_rng(rng).permutation(len(dataset)) if shuffle else np.arange(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        ids, mask = pad_batch([dataset.ids[i] for i in idx], max_len)
        yield ids, mask, dataset.labels[idx]


def read_agnews_csv(path):
    """Parse ``class,title,description`` rows into ``(texts, labels)``.

    A first row whose class field is not an integer is treated as a header.
    """
    texts, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 3:
                raise ParseError(f"expected 3 columns (class, title, description), got {len(row)}", line_no)
            try:
                cls = int(row[0].strip())
            except ValueError:
                if line_no == 1:
                    continue
                raise ParseError(f"class field {row[0]!r} is not an integer", line_no) from None
            if not 1 <= cls <= AGNEWS_CLASSES:
                raise ParseError(f"class {cls} outside 1..{AGNEWS_CLASSES}", line_no)
            texts.append(f"{row[1]} {row[2]}")
            labels.append(cls - 1)
    return texts, np.asarray(labels, dtype=np.int64)


def load_agnews_csv(path, vocab=None, max_len=64, max_vocab=MAX_VOCAB):
    """Load an AG News CSV as a :class:`Dataset`, building a vocabulary if none is given.

    Returns ``(dataset, vocab)``.
    """
    texts, labels = read_agnews_csv(path)
    if vocab is None:
        vocab = Vocabulary.build(texts, max_size=max_vocab)
    ids = [tokenize(t, vocab, max_len) for t in texts]
    return Dataset(ids, labels, AGNEWS_CLASSES, len(vocab)), vocab


def generate_synthetic(
    classes=4,
    vocab_per_class=50,
    len_range=(8, 24),
    n_samples=2000,
    overlap_fraction=0.3,
    rng=None,
    shared_vocab=None,
):
    """Class-block token corpus.

    Each class owns ``vocab_per_class`` token ids and there is one shared
    block of the same size (unless ``shared_vocab`` says otherwise). A sample
    of length ``L`` takes ``round((1 - overlap) * L)`` tokens from its class
    block and the rest from the shared block, in shuffled order. Labels cycle
    through the classes so the set is balanced, then the samples are shuffled.
    """
    if classes < 2:
        raise ConfigError("need at least 2 classes")
    if vocab_per_class < 2:
        raise ConfigError("need at least 2 tokens per class block")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ConfigError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    lo, hi = len_range
    if lo < 1 or hi < lo:
        raise ConfigError(f"invalid len_range {len_range}")
    rng = make_rng(rng)
    shared = vocab_per_class if shared_vocab is None else shared_vocab
    first = CLS_ID + 1
    shared_start = first + classes * vocab_per_class
    vocab_size = shared_start + shared + 1  # + OOV slot

    labels = np.arange(n_samples) % classes
    rng.shuffle(labels)
    ids = []
    for label in labels:
        length = int(rng.integers(lo, hi + 1))
        n_class = int(round((1.0 - overlap_fraction) * length))
        if shared == 0:
            n_class = length
        block = first + label * vocab_per_class
        own = rng.integers(block, block + vocab_per_class, size=n_class)
        common = rng.integers(shared_start, shared_start + max(shared, 1), size=length - n_class)
        tokens = np.concatenate([own, common])
        rng.shuffle(tokens)
        ids.append(np.concatenate([[CLS_ID], tokens]).astype(np.int64))
    return Dataset(ids, labels, classes, vocab_size)


def class_block(dataset_token, classes, vocab_per_class):
    """Class index owning ``dataset_token`` in a synthetic corpus, or ``None`` for shared ids."""
    offset = dataset_token - (CLS_ID + 1)
    if 0 <= offset < classes * vocab_per_class:
        return offset // vocab_per_class
    return None
