"""scikit-learn compatible wrappers.

``WaveTokenizer`` turns raw text into padded ``[CLS]``-prefixed id matrices,
``WaveNetworkClassifier`` trains the wave network on such matrices, and
``Token2WaveTransformer`` exposes the bare embedding-to-wave conversion. They
compose in a regular ``Pipeline``::

    Pipeline([("tok", WaveTokenizer(max_len=64)),
              ("clf", WaveNetworkClassifier(d=64, mode="modulation"))])
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted

from .data import MAX_VOCAB, Dataset, Vocabulary, tokenize
from .model import CLS_ID, PAD_ID, forward
from .training import TrainConfig, train
from .wave_repr import token2wave


class WaveTokenizer(TransformerMixin, BaseEstimator):
    """Lower-cased word/punctuation tokenizer with a frequency-ranked vocabulary."""

    def __init__(self, max_len=64, max_vocab=MAX_VOCAB, lowercase=True):
        self.max_len = max_len
        self.max_vocab = max_vocab
        self.lowercase = lowercase

    def fit(self, X, y=None):
        self.vocab_ = Vocabulary.build(list(X), max_size=self.max_vocab, lowercase=self.lowercase)
        self.vocab_size_ = len(self.vocab_)
        return self

    def transform(self, X):
        check_is_fitted(self, "vocab_")
        return np.stack([tokenize(text, self.vocab_, self.max_len, pad=True) for text in X])


def _split_padding(X):
    """Padded id matrix -> ``(ids, mask)``; PAD ids after the first position are masked."""
    mask = X != PAD_ID
    mask[:, 0] = True
    return X, mask


class WaveNetworkClassifier(ClassifierMixin, BaseEstimator):
    """Single-layer wave network on ``[CLS]``-prefixed id matrices (``PAD_ID`` = padding)."""

    def __init__(
        self,
        d=64,
        mode="modulation",
        lr=1e-3,
        batch_size=64,
        epochs=4,
        max_batches=None,
        optimizer="sgd",
        recombine="real",
        vocab_size=None,
        random_state=0,
    ):
        self.d = d
        self.mode = mode
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.max_batches = max_batches
        self.optimizer = optimizer
        self.recombine = recombine
        self.vocab_size = vocab_size
        self.random_state = random_state

    def _validate_ids(self, X):
        X = check_array(X, dtype=np.int64, ensure_min_features=2)
        if np.any(X[:, 0] != CLS_ID):
            raise ValueError(f"every row must start with the [CLS] id {CLS_ID}")
        return X

    def fit(self, X, y):
        X = self._validate_ids(X)
        check_classification_targets(y)
        self.classes_, encoded = np.unique(np.asarray(y), return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        vocab = self.vocab_size if self.vocab_size is not None else int(X.max()) + 1
        ids, mask = _split_padding(X)
        dataset = Dataset([row[m] for row, m in zip(ids, mask)], encoded, len(self.classes_), vocab)
        config = TrainConfig(
            lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, mode=self.mode, d=self.d,
            seed=self.random_state, max_len=X.shape[1], optimizer=self.optimizer,
            max_batches=self.max_batches, recombine=self.recombine,
        )
        self.params_, self.history_ = train(config, dataset)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = self._validate_ids(X)
        ids, mask = _split_padding(X)
        return forward(self.params_, ids, self.mode, mask, self.recombine).logits

    def predict_proba(self, X):
        logits = self.decision_function(X)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class Token2WaveTransformer(TransformerMixin, BaseEstimator):
    """Map each ``n x d`` embedding matrix in ``X`` to its wave form.

    ``X`` is a 3-D array ``(samples, n, d)``. ``transform`` returns
    ``(samples, n, 2 d)`` with real parts followed by imaginary parts.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"expected (samples, n, d), got shape {X.shape}")
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[-1] != self.n_features_in_:
            raise ValueError(f"expected (samples, n, {self.n_features_in_}), got shape {X.shape}")
        real, imag = token2wave(X)
        return np.concatenate([real, imag], axis=-1)
