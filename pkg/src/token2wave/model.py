"""Single-layer wave network classifier with a hand-written backward pass.

Pipeline for a batch of id sequences (each starting with ``[CLS]``)::

    E  = embed[ids]
    E1 = E @ w_src + b_src            E2 = E @ w_tgt + b_tgt
    Z1 = token2wave(E1)               Z2 = token2wave(E2)
    Z  = interference(Z1, Z2)  or  modulation(Z1, Z2)
    R  = layer_norm_real(ff(Z.real))  I = layer_norm_imag(ff(Z.imag))
    out = recombine(R, I)             # magnitude * cos(phase) == R
    logits = out[:, 0] @ clf_w + clf_b

The feed-forward block is shared by the real and imaginary paths; each path
has its own normalisation. There are no residual connections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.special import erf

from .exceptions import DegenerateInputError, DimensionError, LabelError, LookupIdError
from .tensor_core import make_rng
from .wave_ops import COMBINERS, CartesianWave
from .wave_repr import token2wave, vjp_wave_repr

PAD_ID = 0
CLS_ID = 1
LN_EPS = 1e-5
MODES = tuple(COMBINERS)
RECOMBINE = ("real", "magnitude")
# small classifier weights keep the first-batch loss near ln(C)
CLF_INIT_STD = 0.02

_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass
class ModelParams:
    embed: np.ndarray
    w_src: np.ndarray
    b_src: np.ndarray
    w_tgt: np.ndarray
    b_tgt: np.ndarray
    ff1_w: np.ndarray
    ff1_b: np.ndarray
    ff2_w: np.ndarray
    ff2_b: np.ndarray
    norm_real_scale: np.ndarray
    norm_real_shift: np.ndarray
    norm_imag_scale: np.ndarray
    norm_imag_shift: np.ndarray
    clf_w: np.ndarray
    clf_b: np.ndarray

    NON_WAVE = ("embed", "clf_w", "clf_b")

    @property
    def vocab_size(self):
        return self.embed.shape[0]

    @property
    def d(self):
        return self.embed.shape[1]

    @property
    def num_classes(self):
        return self.clf_w.shape[1]

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    def items(self):
        return [(name, getattr(self, name)) for name in self.names()]

    def copy(self):
        return ModelParams(**{k: v.copy() for k, v in self.items()})

    def zeros_like(self):
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.items()})

    def size(self):
        return sum(v.size for _, v in self.items())

    def wave_layer_size(self):
        """Trainable parameters outside the embedding table and the classifier."""
        return sum(v.size for k, v in self.items() if k not in self.NON_WAVE)


def init_params(vocab_size, d, num_classes, rng=None):
    """Embeddings ~ N(0, 1); linear weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    The classifier starts with N(0, 0.02^2) weights and a zero bias so the
    initial predictions are close to uniform.
    """
    if vocab_size < 1 or d < 1 or num_classes < 2:
        raise DimensionError(
            f"need vocab_size >= 1, d >= 1, num_classes >= 2; got {vocab_size}, {d}, {num_classes}"
        )
    rng = make_rng(rng)

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    h = 4 * d
    return ModelParams(
        embed=rng.standard_normal((vocab_size, d)),
        w_src=uniform(d, (d, d)),
        b_src=uniform(d, d),
        w_tgt=uniform(d, (d, d)),
        b_tgt=uniform(d, d),
        ff1_w=uniform(d, (d, h)),
        ff1_b=uniform(d, h),
        ff2_w=uniform(h, (h, d)),
        ff2_b=uniform(h, d),
        norm_real_scale=np.ones(d),
        norm_real_shift=np.zeros(d),
        norm_imag_scale=np.ones(d),
        norm_imag_shift=np.zeros(d),
        clf_w=CLF_INIT_STD * rng.standard_normal((d, num_classes)),
        clf_b=np.zeros(num_classes),
    )


# ---------------------------------------------------------------- layers


def _sum_leading(x, keep):
    return x.reshape(-1, *x.shape[x.ndim - keep:]).sum(axis=0)


def linear(x, w, b):
    return x @ w + b


def vjp_linear(x, w, upstream):
    """Returns ``(grad_x, grad_w, grad_b)``."""
    gx = upstream @ w.T
    gw = x.reshape(-1, x.shape[-1]).T @ upstream.reshape(-1, upstream.shape[-1])
    gb = _sum_leading(upstream, 1)
    return gx, gw, gb


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT_2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT_2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def feed_forward(x, p):
    """``d -> 4d -> d`` with GELU in between; returns ``(output, hidden_preactivation)``."""
    h = linear(x, p.ff1_w, p.ff1_b)
    return linear(gelu(h), p.ff2_w, p.ff2_b), h


def vjp_feed_forward(x, h, p, upstream):
    """Returns ``(grad_x, {param_name: grad})``."""
    a = gelu(h)
    ga, g2w, g2b = vjp_linear(a, p.ff2_w, upstream)
    gh = ga * gelu_grad(h)
    gx, g1w, g1b = vjp_linear(x, p.ff1_w, gh)
    return gx, {"ff1_w": g1w, "ff1_b": g1b, "ff2_w": g2w, "ff2_b": g2b}


def layer_norm(x, scale, shift, eps=LN_EPS):
    """Normalise over the last axis; returns ``(output, normalised, inv_std)``."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return xhat * scale + shift, xhat, inv_std


def vjp_layer_norm(xhat, inv_std, scale, upstream):
    """Returns ``(grad_x, grad_scale, grad_shift)``."""
    g_scale = _sum_leading(upstream * xhat, 1)
    g_shift = _sum_leading(upstream, 1)
    gxhat = upstream * scale
    gx = inv_std * (
        gxhat
        - gxhat.mean(axis=-1, keepdims=True)
        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return gx, g_scale, g_shift


def recombine(real, imag, how="real"):
    """Turn the normalised real/imag paths back into token embeddings.

    ``"real"`` is magnitude * cos(phase) of the complex output, which is its
    real part. ``"magnitude"`` is an alternative that uses both paths.
    """
    if how == "real":
        return real.copy()
    if how == "magnitude":
        return np.hypot(real, imag)
    raise ValueError(f"unknown recombine rule {how!r}; expected one of {RECOMBINE}")


def vjp_recombine(real, imag, upstream, how="real"):
    if how == "real":
        return upstream, np.zeros_like(imag)
    mag = np.hypot(real, imag)
    safe = np.where(mag > 0, mag, 1.0)
    return upstream * real / safe, upstream * imag / safe


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


# ---------------------------------------------------------------- forward / backward


@dataclass
class ForwardTrace:
    ids: np.ndarray
    mask: np.ndarray
    mode: str
    recombine: str
    embedded: np.ndarray
    src: np.ndarray
    tgt: np.ndarray
    wave_src: CartesianWave
    wave_tgt: CartesianWave
    combined: CartesianWave
    ff_hidden_real: np.ndarray
    ff_hidden_imag: np.ndarray
    ff_real: np.ndarray
    ff_imag: np.ndarray
    xhat_real: np.ndarray
    xhat_imag: np.ndarray
    inv_std_real: np.ndarray
    inv_std_imag: np.ndarray
    norm_real: np.ndarray
    norm_imag: np.ndarray
    restored: np.ndarray
    logits: np.ndarray
    probs: np.ndarray

    @property
    def cls_output(self):
        """Restored ``[CLS]`` vectors, ``(B, d)``."""
        return self.restored[:, 0, :]


@dataclass
class GradBundle:
    params: ModelParams
    embedded: np.ndarray  # gradient wrt the looked-up embedding rows, (B, n, d)
    mask: np.ndarray

    @property
    def cls_rows(self):
        return self.embedded[:, 0, :]

    @property
    def input_rows(self):
        return self.embedded

    @property
    def context_rows(self):
        return self.embedded[:, 1:, :]

    @property
    def classifier(self):
        return np.concatenate([self.params.clf_w.ravel(), self.params.clf_b.ravel()])


@dataclass(frozen=True)
class GradRecord:
    cls: float
    input: float
    clf: float


def _check_batch(params, ids, mask, cls_id):
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise DimensionError(f"batch ids must be (B, n), got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise DimensionError("token ids must be integers")
    if ids.shape[1] < 2:
        raise DegenerateInputError("sequences need [CLS] plus at least one token (n >= 2)")
    if np.any(ids < 0) or np.any(ids >= params.vocab_size):
        bad = ids[(ids < 0) | (ids >= params.vocab_size)][0]
        raise LookupIdError(f"token id {bad} outside vocabulary of size {params.vocab_size}")
    if cls_id is not None and np.any(ids[:, 0] != cls_id):
        raise DimensionError(f"every sequence must start with the [CLS] id {cls_id}")
    if mask is None:
        mask = np.ones(ids.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != ids.shape:
            raise DimensionError(f"mask shape {mask.shape} does not match ids {ids.shape}")
        if not np.all(mask[:, 0]):
            raise DimensionError("the [CLS] position cannot be masked out")
        if np.any(mask.sum(axis=1) < 2):
            raise DegenerateInputError("every sequence needs at least one real token after [CLS]")
    return ids, mask


def forward(params, ids, mode="modulation", mask=None, recombine_rule="real", cls_id=CLS_ID):
    """Run the network on a ``(B, n)`` id batch and cache every intermediate."""
    if mode not in COMBINERS:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    ids, mask = _check_batch(params, ids, mask, cls_id)
    combine = COMBINERS[mode][0]

    e = params.embed[ids]
    src = linear(e, params.w_src, params.b_src)
    tgt = linear(e, params.w_tgt, params.b_tgt)
    z1 = CartesianWave(*token2wave(src, mask))
    z2 = CartesianWave(*token2wave(tgt, mask))
    z = combine(z1, z2)
    ff_r, h_r = feed_forward(z.real, params)
    ff_i, h_i = feed_forward(z.imag, params)
    nr, xr, sr = layer_norm(ff_r, params.norm_real_scale, params.norm_real_shift)
    ni, xi, si = layer_norm(ff_i, params.norm_imag_scale, params.norm_imag_shift)
    out = recombine(nr, ni, recombine_rule)
    logits = linear(out[:, 0, :], params.clf_w, params.clf_b)
    probs = np.exp(log_softmax(logits))
    return ForwardTrace(
        ids=ids, mask=mask, mode=mode, recombine=recombine_rule,
        embedded=e, src=src, tgt=tgt, wave_src=z1, wave_tgt=z2, combined=z,
        ff_hidden_real=h_r, ff_hidden_imag=h_i, ff_real=ff_r, ff_imag=ff_i,
        xhat_real=xr, xhat_imag=xi, inv_std_real=sr, inv_std_imag=si,
        norm_real=nr, norm_imag=ni, restored=out, logits=logits, probs=probs,
    )


def _check_labels(labels, batch, num_classes):
    y = np.asarray(labels)
    if y.shape != (batch,):
        raise DimensionError(f"expected {batch} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer) or np.any(y < 0) or np.any(y >= num_classes):
        raise LabelError(f"labels must be integers in [0, {num_classes})")
    return y


def loss_from_logits(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    y = _check_labels(labels, logits.shape[0], logits.shape[1])
    return float(-np.mean(log_softmax(logits)[np.arange(len(y)), y]))


def loss(trace, labels):
    """Mean cross-entropy of the batch."""
    return loss_from_logits(trace.logits, labels)


def backward(params, trace, labels):
    """Exact gradients of the mean cross-entropy wrt every parameter."""
    y = _check_labels(labels, trace.logits.shape[0], trace.logits.shape[1])
    batch = len(y)
    grads = params.zeros_like()

    d_logits = trace.probs.copy()
    d_logits[np.arange(batch), y] -= 1.0
    d_logits /= batch
    d_cls, grads.clf_w, grads.clf_b = vjp_linear(trace.cls_output, params.clf_w, d_logits)

    d_out = np.zeros_like(trace.restored)
    d_out[:, 0, :] = d_cls
    d_nr, d_ni = vjp_recombine(trace.norm_real, trace.norm_imag, d_out, trace.recombine)

    d_ffr, grads.norm_real_scale, grads.norm_real_shift = vjp_layer_norm(
        trace.xhat_real, trace.inv_std_real, params.norm_real_scale, d_nr
    )
    d_ffi, grads.norm_imag_scale, grads.norm_imag_shift = vjp_layer_norm(
        trace.xhat_imag, trace.inv_std_imag, params.norm_imag_scale, d_ni
    )
    d_zr, ff_grads_r = vjp_feed_forward(trace.combined.real, trace.ff_hidden_real, params, d_ffr)
    d_zi, ff_grads_i = vjp_feed_forward(trace.combined.imag, trace.ff_hidden_imag, params, d_ffi)
    for name in ff_grads_r:
        setattr(grads, name, ff_grads_r[name] + ff_grads_i[name])

    vjp_combine = COMBINERS[trace.mode][1]
    d_z1, d_z2 = vjp_combine(trace.wave_src, trace.wave_tgt, CartesianWave(d_zr, d_zi))
    d_src = vjp_wave_repr(trace.src, d_z1.real, d_z1.imag, trace.mask)
    d_tgt = vjp_wave_repr(trace.tgt, d_z2.real, d_z2.imag, trace.mask)

    d_e_src, grads.w_src, grads.b_src = vjp_linear(trace.embedded, params.w_src, d_src)
    d_e_tgt, grads.w_tgt, grads.b_tgt = vjp_linear(trace.embedded, params.w_tgt, d_tgt)
    d_e = d_e_src + d_e_tgt

    np.add.at(grads.embed, trace.ids, d_e)
    return GradBundle(params=grads, embedded=d_e, mask=trace.mask)


def grad_norms(bundle):
    """L2 norms of the ``[CLS]`` rows, all input rows and the classifier gradient."""
    return GradRecord(
        cls=float(np.linalg.norm(bundle.cls_rows)),
        input=float(np.linalg.norm(bundle.input_rows)),
        clf=float(np.linalg.norm(bundle.classifier)),
    )


def predict_logits(params, ids, mode="modulation", mask=None, recombine_rule="real"):
    return forward(params, ids, mode, mask, recombine_rule).logits


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_FORMAT = "token2wave-params"


def params_to_dict(params):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "params": {
            name: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for name, value in params.items()
        },
    }


def params_from_dict(payload):
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a token2wave parameter checkpoint")
    stored = payload["params"]
    missing = set(ModelParams.names()) - set(stored)
    if missing:
        raise ValueError(f"checkpoint is missing {sorted(missing)}")
    arrays = {}
    for name in ModelParams.names():
        entry = stored[name]
        arrays[name] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return ModelParams(**arrays)


def save_params(params, path):
    Path(path).write_text(json.dumps(params_to_dict(params)))


def load_params(path):
    return params_from_dict(json.loads(Path(path).read_text()))
