"""Analysis tools: gradient-norm KDE, [CLS] eigenvalue ratio, embedding decay
simulation, parameter/complexity counters and finite-difference gradient checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, DimensionError, PointRejectedError
from .tensor_core import make_rng, singular_values

# ---------------------------------------------------------------- KDE


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))


def silverman_bandwidth(samples):
    x = np.asarray(samples, dtype=np.float64)
    return 1.06 * np.std(x, ddof=1) * len(x) ** (-0.2)


def kde(samples, grid_points=512, bandwidth="silverman"):
    """Gaussian-kernel density estimate on a grid spanning ``[min - 4h, max + 4h]``."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise DegenerateInputError("KDE needs at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain NaN or Inf")
    if np.ptp(x) == 0:
        raise DegenerateInputError("KDE needs samples with nonzero variance")
    if grid_points < 2:
        raise DimensionError("grid_points must be >= 2")
    h = silverman_bandwidth(x) if bandwidth == "silverman" else float(bandwidth)
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    grid = np.linspace(x.min() - 4 * h, x.max() + 4 * h, grid_points)
    density = np.zeros(grid_points)
    # chunk over samples to bound memory at grid_points * chunk
    for start in range(0, x.size, 4096):
        u = (grid[:, None] - x[None, start : start + 4096]) / h
        density += np.exp(-0.5 * u * u).sum(axis=1)
    density /= x.size * h * math.sqrt(2 * math.pi)
    return KdeCurve(grid, density, h)


# ---------------------------------------------------------------- eigenvalue ratio


def eigen_ratio(cls_batch, rel_floor=1e-10):
    """Smallest-nonzero over largest singular value of the row-centred batch.

    Singular values below ``rel_floor * sigma_max`` count as zero. The result
    lies in ``(0, 1]``; values near 1 mean the batch spreads evenly across
    directions, values near 0 mean a few directions dominate.
    """
    x = np.asarray(cls_batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise DegenerateInputError(f"need a (B >= 2, d) matrix, got shape {x.shape}")
    x = x - x.mean(axis=0, keepdims=True)
    if not np.any(x):
        raise DegenerateInputError("centred batch is all zero")
    s = singular_values(x)
    top = s[0]
    kept = s[s > rel_floor * top]
    return float(kept[-1] / top)


# ---------------------------------------------------------------- decay simulation

PUBLISHED_EPOCH_LOSSES = (0.4311, 0.2502, 0.2065, 0.1722)
PUBLISHED_DECAY_VALUE = 0.0326


@dataclass
class DecayTrajectory:
    eta: float
    errors: list
    values: np.ndarray
    iters_per_epoch: int
    sign_flip: bool = False

    def closed_form(self, t):
        """``w0 * prod(1 - 2 eta error_epoch(s))`` over the first ``t`` iterations."""
        w0 = self.values[0]
        full, rem = divmod(t, self.iters_per_epoch) if self.iters_per_epoch else (0, 0)
        factors = [(1 - 2 * self.eta * e) for e in self.errors]
        out = w0
        for e in range(min(full, len(factors))):
            out *= factors[e] ** self.iters_per_epoch
        if full < len(factors):
            out *= factors[full] ** rem
        return out


def decay_simulation(w0, eta, errors, iters_per_epoch):
    """Iterate ``w <- w * (1 - 2 eta error)`` with the error held fixed within each epoch."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    errors = [float(e) for e in errors]
    if not errors:
        raise ValueError("errors must be non-empty")
    if iters_per_epoch < 0:
        raise ValueError("iters_per_epoch must be >= 0")
    flip = any(2 * eta * e >= 1 for e in errors)
    if flip:
        warnings.warn("2 * eta * error >= 1: the update factor is <= 0 and the sign flips", RuntimeWarning)
    values = np.empty(len(errors) * iters_per_epoch + 1)
    values[0] = w0
    t = 0
    for e in errors:
        factor = 1 - 2 * eta * e
        for _ in range(iters_per_epoch):
            values[t + 1] = values[t] * factor
            t += 1
    return DecayTrajectory(eta, errors, values, iters_per_epoch, flip)


def iterations_to_reach(target, w0=1.0, eta=1e-3, error=PUBLISHED_EPOCH_LOSSES[0]):
    """Smallest ``t`` with ``w0 * (1 - 2 eta error)**t <= target``."""
    factor = 1 - 2 * eta * error
    if not 0 < factor < 1 or not 0 < target < w0:
        raise ValueError("need 0 < 1 - 2 eta error < 1 and 0 < target < w0")
    t = math.ceil(math.log(target / w0) / math.log(factor))
    while w0 * factor ** (t - 1) <= target:
        t -= 1
    while w0 * factor**t > target:
        t += 1
    return t


# ---------------------------------------------------------------- parameter count

PUBLISHED_TOTAL_768 = 2_365_184


def count_params(d):
    """Parameter totals for the wave layer (projections, feed-forward, norms).

    ``formula_total`` is the closed form ``4 (d^2 + d)``. The itemised block
    lists what each stage of :mod:`token2wave.model` actually holds, and
    ``architecture_total`` is their sum. For ``d = 768`` the report also
    carries the published figure and its difference from the formula.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    items = {
        "source_target": 2 * (d * d + d),
        "feed_forward_closed_form": 2 * (d * d + d),
        "feed_forward": (d * 4 * d + 4 * d) + (4 * d * d + d),
        "normalization": 2 * (2 * d),
    }
    report = {
        "d": d,
        "formula": "(d^2 + d) * 4",
        "formula_total": 4 * (d * d + d),
        "itemized": items,
        "architecture_total": items["source_target"] + items["feed_forward"] + items["normalization"],
    }
    if d == 768:
        report["published_total"] = PUBLISHED_TOTAL_768
        report["published_discrepancy"] = PUBLISHED_TOTAL_768 - report["formula_total"]
    return report


# ---------------------------------------------------------------- complexity


@dataclass(frozen=True)
class Term:
    """``coefficient * n**n_power * d**d_power``."""

    coefficient: float
    n_power: int
    d_power: int

    def evaluate(self, n, d):
        return self.coefficient * n**self.n_power * d**self.d_power

    def symbol(self):
        parts = []
        if self.coefficient != 1:
            parts.append(f"{self.coefficient:g}")
        for name, p in (("n", self.n_power), ("d", self.d_power)):
            if p == 1:
                parts.append(name)
            elif p > 1:
                parts.append(f"{name}^{p}")
        return "*".join(parts) or "1"


WAVE_TIME = {
    "source_target": (Term(1, 1, 2),),
    "to_complex": (Term(1, 1, 1),),
    "combine": (Term(1, 1, 1),),
    "feed_forward": (Term(1, 1, 2),),
    "normalization": (Term(1, 1, 1),),
    "to_embedding": (Term(1, 1, 1),),
}
WAVE_SPACE = {
    "source_target": (Term(1, 0, 2), Term(1, 1, 1)),
    "to_complex": (Term(1, 1, 1),),
    "combine": (Term(1, 1, 1),),
    "feed_forward": (Term(1, 0, 2), Term(1, 1, 1)),
    "normalization": (Term(1, 0, 1),),
    "to_embedding": (Term(1, 1, 1),),
}
ATTENTION_TIME = (Term(1, 2, 1),)
ATTENTION_SPACE = (Term(1, 2, 0), Term(1, 1, 1), Term(1, 0, 2))


def _dominant(terms):
    """Terms not dominated by another term (componentwise larger or equal powers)."""
    uniq = {(t.n_power, t.d_power) for t in terms}
    keep = [p for p in uniq if not any(q != p and q[0] >= p[0] and q[1] >= p[1] for q in uniq)]
    return sorted(keep, reverse=True)


def _big_o(pairs):
    return " + ".join(Term(1, n, d).symbol() for n, d in pairs)


@dataclass
class ComplexityReport:
    n: int
    d: int
    wave_time: dict = field(default_factory=dict)
    wave_space: dict = field(default_factory=dict)

    def _evaluate(self, table):
        return {stage: sum(t.evaluate(self.n, self.d) for t in terms) for stage, terms in table.items()}

    def as_dict(self):
        wave_time_terms = [t for terms in self.wave_time.values() for t in terms]
        wave_space_terms = [t for terms in self.wave_space.values() for t in terms]
        time_vals = self._evaluate(self.wave_time)
        space_vals = self._evaluate(self.wave_space)
        att_time = sum(t.evaluate(self.n, self.d) for t in ATTENTION_TIME)
        att_space = sum(t.evaluate(self.n, self.d) for t in ATTENTION_SPACE)
        crossover = crossover_n(self.d)
        return {
            "n": self.n,
            "d": self.d,
            "wave": {
                "time_terms": {k: [t.symbol() for t in v] for k, v in self.wave_time.items()},
                "space_terms": {k: [t.symbol() for t in v] for k, v in self.wave_space.items()},
                "time": time_vals,
                "space": space_vals,
                "time_total": sum(time_vals.values()),
                "space_total": sum(space_vals.values()),
                "time_big_o": _big_o(_dominant(wave_time_terms)),
                "space_big_o": _big_o(_dominant(wave_space_terms)),
            },
            "attention": {
                "time_total": att_time,
                "space_total": att_space,
                "time_big_o": _big_o(_dominant(list(ATTENTION_TIME))),
                "space_big_o": _big_o(_dominant(list(ATTENTION_SPACE))),
            },
            "crossover_n": crossover,
            "attention_time_exceeds_wave": self.n >= crossover,
        }

    @property
    def wave_time_total(self):
        return sum(self._evaluate(self.wave_time).values())

    @property
    def wave_space_total(self):
        return sum(self._evaluate(self.wave_space).values())

    @property
    def attention_time_total(self):
        return sum(t.evaluate(self.n, self.d) for t in ATTENTION_TIME)

    @property
    def attention_space_total(self):
        return sum(t.evaluate(self.n, self.d) for t in ATTENTION_SPACE)

    def dominant_time(self):
        return _dominant([t for terms in self.wave_time.values() for t in terms])

    def dominant_space(self):
        return _dominant([t for terms in self.wave_space.values() for t in terms])


def crossover_n(d):
    """Smallest ``n`` with ``n^2 d > n d^2``, i.e. ``n = d + 1``."""
    return d + 1


def complexity_report(n, d):
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    return ComplexityReport(n, d, dict(WAVE_TIME), dict(WAVE_SPACE))


# ---------------------------------------------------------------- gradient checks

FD_STEP = 1e-5
IMAG_FLOOR = 1e-3


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def numeric_grad(f, x, step=FD_STEP):
    """Central differences of the scalar function ``f`` at ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = hi = old + step
        up = f()
        x[idx] = lo = old - step
        down = f()
        x[idx] = old
        # divide by the representable step, not the nominal 2 * step
        grad[idx] = (up - down) / (hi - lo)
    return grad


def _check_away_from_singular(*embeddings, mask=None):
    from .wave_repr import token2wave

    for e in embeddings:
        _, imag = token2wave(e, mask)
        live = imag if mask is None else imag[np.broadcast_to(np.asarray(mask)[..., None], imag.shape)]
        if np.any(live < IMAG_FLOOR):
            raise PointRejectedError(f"imaginary part {live.min():.2e} below {IMAG_FLOOR}; point too close to |w| = g")


def _gc_linear(point, upstream, rng):
    from .model import linear, vjp_linear

    x = point.get("x", rng.standard_normal((3, 4))) if point else rng.standard_normal((3, 4))
    w = point.get("w", rng.standard_normal((4, 5))) if point else rng.standard_normal((4, 5))
    b = point.get("b", rng.standard_normal(5)) if point else rng.standard_normal(5)
    up = rng.standard_normal((x.shape[0], w.shape[1])) if upstream is None else upstream
    gx, gw, gb = vjp_linear(x, w, up)

    def f():
        return np.sum(up * linear(x, w, b))

    return max(relative_error(gx, numeric_grad(f, x)), relative_error(gw, numeric_grad(f, w)),
               relative_error(gb, numeric_grad(f, b)))


def _gc_wave_repr(point, upstream, rng):
    from .wave_repr import token2wave, vjp_wave_repr

    e = rng.standard_normal((3, 4)) if point is None else np.array(point, dtype=np.float64)
    _check_away_from_singular(e)
    if upstream is None:
        up_r, up_i = rng.standard_normal(e.shape), rng.standard_normal(e.shape)
    else:
        up_r, up_i = upstream
    analytic = vjp_wave_repr(e, up_r, up_i)

    def f():
        real, imag = token2wave(e)
        return np.sum(up_r * real + up_i * imag)

    return relative_error(analytic, numeric_grad(f, e))


def _gc_combine(mode):
    def check(point, upstream, rng):
        from .wave_ops import COMBINERS, CartesianWave

        fwd, vjp = COMBINERS[mode]
        if point is None:
            z = CartesianWave(rng.standard_normal((2, 3)), rng.standard_normal((2, 3)))
            z2 = CartesianWave(rng.standard_normal((2, 3)), rng.standard_normal((2, 3)))
        else:
            z, z2 = (CartesianWave(*map(np.array, p)) for p in point)
        up = CartesianWave(rng.standard_normal(z.real.shape), rng.standard_normal(z.real.shape)) \
            if upstream is None else CartesianWave(*upstream)
        gz, gz2 = vjp(z, z2, up)

        def f():
            out = fwd(z, z2)
            return np.sum(up.real * out.real + up.imag * out.imag)

        return max(relative_error(gz.real, numeric_grad(f, z.real)), relative_error(gz.imag, numeric_grad(f, z.imag)),
                   relative_error(gz2.real, numeric_grad(f, z2.real)), relative_error(gz2.imag, numeric_grad(f, z2.imag)))

    return check


def _small_params(rng, vocab=8, d=4, classes=2):
    from .model import init_params

    p = init_params(vocab, d, classes, rng)
    # non-trivial norm parameters so their gradients are exercised
    for name in ("norm_real_scale", "norm_real_shift", "norm_imag_scale", "norm_imag_shift"):
        getattr(p, name)[:] += 0.3 * rng.standard_normal(d)
    return p


def _gc_feed_forward(point, upstream, rng):
    from .model import feed_forward, vjp_feed_forward

    p = _small_params(rng)
    x = rng.standard_normal((3, p.d)) if point is None else np.array(point, dtype=np.float64)
    up = rng.standard_normal(x.shape) if upstream is None else upstream
    _, h = feed_forward(x, p)
    gx, gp = vjp_feed_forward(x, h, p, up)

    def f():
        return np.sum(up * feed_forward(x, p)[0])

    errs = [relative_error(gx, numeric_grad(f, x))]
    errs += [relative_error(gp[name], numeric_grad(f, getattr(p, name))) for name in gp]
    return max(errs)


def _gc_layer_norm(point, upstream, rng):
    from .model import layer_norm, vjp_layer_norm

    x = rng.standard_normal((3, 4)) if point is None else np.array(point, dtype=np.float64)
    scale = 1.0 + 0.3 * rng.standard_normal(x.shape[-1])
    shift = 0.3 * rng.standard_normal(x.shape[-1])
    up = rng.standard_normal(x.shape) if upstream is None else upstream
    _, xhat, inv_std = layer_norm(x, scale, shift)
    gx, gs, gb = vjp_layer_norm(xhat, inv_std, scale, up)

    def f():
        return np.sum(up * layer_norm(x, scale, shift)[0])

    return max(relative_error(gx, numeric_grad(f, x)), relative_error(gs, numeric_grad(f, scale)),
               relative_error(gb, numeric_grad(f, shift)))


def _gc_classifier(point, upstream, rng):
    from .model import linear, log_softmax, vjp_linear

    x = rng.standard_normal((4, 3)) if point is None else np.array(point, dtype=np.float64)
    w = rng.standard_normal((x.shape[1], 2))
    b = rng.standard_normal(2)
    y = rng.integers(0, 2, x.shape[0])

    def f():
        return -np.mean(log_softmax(linear(x, w, b))[np.arange(len(y)), y])

    logits = linear(x, w, b)
    p = np.exp(log_softmax(logits))
    p[np.arange(len(y)), y] -= 1
    gx, gw, gb = vjp_linear(x, w, p / len(y))
    return max(relative_error(gx, numeric_grad(f, x)), relative_error(gw, numeric_grad(f, w)),
               relative_error(gb, numeric_grad(f, b)))


def _gc_full_model(mode, batch):
    def check(point, upstream, rng):
        from .model import CLS_ID, backward, forward, loss

        vocab, d, n, classes = 8, 4, 3, 2
        p = _small_params(rng, vocab, d, classes)
        if point is None:
            ids = np.concatenate([np.full((batch, 1), CLS_ID), rng.integers(0, vocab, (batch, n - 1))], axis=1)
        else:
            ids = np.asarray(point)
        y = rng.integers(0, classes, ids.shape[0]) if upstream is None else np.asarray(upstream)
        trace = forward(p, ids, mode)
        _check_away_from_singular(trace.src, trace.tgt)
        grads = backward(p, trace, y)

        def f():
            return loss(forward(p, ids, mode), y)

        return max(relative_error(getattr(grads.params, name), numeric_grad(f, value)) for name, value in p.items())

    return check


GRAD_CHECKS = {
    "linear": _gc_linear,
    "wave_repr": _gc_wave_repr,
    "interference": _gc_combine("interference"),
    "modulation": _gc_combine("modulation"),
    "feed_forward": _gc_feed_forward,
    "layer_norm": _gc_layer_norm,
    "classifier": _gc_classifier,
    "full_model_modulation": _gc_full_model("modulation", batch=2),
    # Interference rows share their logits (the [CLS] output ignores the other
    # tokens), so mixed labels in a batch cancel the shared-weight gradient down
    # to roundoff level; a single row keeps the check meaningful.
    "full_model_interference": _gc_full_model("interference", batch=1),
}
FULL_MODEL_OPS = ("full_model_modulation", "full_model_interference")


def grad_check(op_id, point=None, upstream=None, rng=None):
    """Maximum elementwise relative error between the analytic VJP and central differences.

    ``point`` and ``upstream`` are drawn from ``rng`` when omitted. Raises
    :class:`PointRejectedError` when a wave conversion at the point has an
    imaginary part below ``1e-3``.
    """
    if op_id not in GRAD_CHECKS:
        raise KeyError(f"unknown op {op_id!r}; expected one of {sorted(GRAD_CHECKS)}")
    return GRAD_CHECKS[op_id](point, upstream, make_rng(rng))
