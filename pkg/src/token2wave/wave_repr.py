"""Token embeddings as complex waves: magnitude from the whole text, phase per token.

For an ``n x d`` embedding matrix ``w`` the magnitude in dimension ``k`` is the
column norm ``g_k = sqrt(sum_j w[j, k]**2)``, shared by every token of the
text. Token ``j`` gets the phase ``alpha[j, k] = atan2(sqrt(1 - x**2), x)``
with ``x = w[j, k] / g_k``, so ``g_k * cos(alpha) == w[j, k]`` and the
imaginary part ``g_k * sin(alpha)`` is the norm of the column with token ``j``
left out.

Every function accepts a leading batch axis: arrays are ``(..., n, d)`` and
an optional boolean ``mask`` of shape ``(..., n)`` marks real (non-padding)
tokens. Masked-out rows contribute nothing to the magnitude and come back
as zeros in the Cartesian view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConsistencyError, DimensionError

CONSISTENCY_TOL = 1e-9
# Cap on 1/imag in the backward pass; the derivative of sqrt blows up as imag -> 0.
MAX_INV_IMAG = 1e6


def _check_embedding(e):
    e = np.asarray(e, dtype=np.float64)
    if e.ndim < 2 or e.shape[-1] == 0 or e.shape[-2] == 0:
        raise DimensionError(f"embedding must be (..., n, d) with n, d >= 1, got {e.shape}")
    if not np.all(np.isfinite(e)):
        raise ValueError("embedding contains NaN or Inf")
    return e


def _apply_mask(e, mask):
    if mask is None:
        return e, None
    m = np.asarray(mask, dtype=bool)
    if m.shape != e.shape[:-1]:
        raise DimensionError(f"mask shape {m.shape} does not match embedding {e.shape}")
    m = m[..., None].astype(np.float64)
    return e * m, m


def compute_global_semantics(e, mask=None):
    """Column L2 norms over the tokens of each text, shape ``(..., d)``."""
    e, _ = _apply_mask(_check_embedding(e), mask)
    return np.sqrt(np.sum(e * e, axis=-2))


def compute_phase(e, g, mask=None):
    """Per-token phase in ``[0, pi]``; columns with ``g == 0`` get phase 0."""
    e, m = _apply_mask(_check_embedding(e), mask)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != e.shape[:-2] + e.shape[-1:]:
        raise DimensionError(f"magnitude shape {g.shape} does not match embedding {e.shape}")
    gb = g[..., None, :]
    excess = np.abs(e) - gb
    if np.any(excess > CONSISTENCY_TOL * np.maximum(1.0, gb)):
        raise ConsistencyError("some |w[j, k]| exceeds g[k]; g was not computed from these embeddings")
    nonzero = gb > 0
    x = np.divide(e, gb, out=np.zeros_like(e), where=nonzero)
    x = np.clip(x, -1.0, 1.0)
    alpha = np.arctan2(np.sqrt(1.0 - x * x), x)
    alpha = np.where(nonzero, alpha, 0.0)
    if m is not None:
        # padding rows have w = 0, i.e. phase pi/2; keep them but they are zeroed in the Cartesian view
        alpha = np.where(m > 0, alpha, np.pi / 2)
    return alpha


@dataclass(frozen=True)
class WaveRepr:
    """Polar form of a text: shared magnitude ``(..., d)`` and phases ``(..., n, d)``."""

    magnitude: np.ndarray
    phase: np.ndarray
    mask: np.ndarray | None = None

    @classmethod
    def from_embedding(cls, e, mask=None):
        g = compute_global_semantics(e, mask)
        alpha = compute_phase(e, g, mask)
        return cls(g, alpha, None if mask is None else np.asarray(mask, dtype=bool))

    @property
    def n(self):
        return self.phase.shape[-2]

    @property
    def d(self):
        return self.phase.shape[-1]

    def to_cartesian(self):
        return to_cartesian(self)


def to_cartesian(r):
    """Return ``(real, imag)`` with ``real = g cos(alpha)`` and ``imag = g sin(alpha)``."""
    g = r.magnitude[..., None, :]
    real = g * np.cos(r.phase)
    imag = g * np.sin(r.phase)
    if r.mask is not None:
        m = r.mask[..., None]
        real = np.where(m, real, 0.0)
        imag = np.where(m, imag, 0.0)
    return real, imag


def restore_embedding(r):
    """Map a wave back to real embeddings, ``g * cos(alpha)``."""
    return to_cartesian(r)[0]


def token2wave(e, mask=None):
    """Embeddings straight to the Cartesian wave ``(real, imag)``.

    The real part is returned as the (masked) embedding itself, which equals
    ``g cos(alpha)`` up to rounding and keeps it independent of other tokens.
    """
    r = WaveRepr.from_embedding(e, mask)
    _, imag = to_cartesian(r)
    real, _ = _apply_mask(np.asarray(e, dtype=np.float64), mask)
    return real, imag


def vjp_wave_repr(e, upstream_real, upstream_imag, mask=None):
    """Vector-Jacobian product of ``e -> (real, imag)``.

    ``real`` is the identity on ``e``; ``imag[j, k]`` is the leave-one-out
    column norm, whose derivative wrt ``w[i, k]`` (``i != j``) is
    ``w[i, k] / imag[j, k]``. The ``1 / imag`` factor is capped at
    ``MAX_INV_IMAG``; all-zero columns get zero gradient.
    """
    e = _check_embedding(e)
    up_r = np.asarray(upstream_real, dtype=np.float64)
    up_i = np.asarray(upstream_imag, dtype=np.float64)
    if up_r.shape != e.shape or up_i.shape != e.shape:
        raise DimensionError(
            f"upstream shapes {up_r.shape}, {up_i.shape} do not match embedding {e.shape}"
        )
    em, m = _apply_mask(e, mask)
    g2 = np.sum(em * em, axis=-2, keepdims=True)
    imag = np.sqrt(np.maximum(g2 - em * em, 0.0))
    inv = np.where(imag > 1.0 / MAX_INV_IMAG, 1.0 / np.maximum(imag, 1.0 / MAX_INV_IMAG), MAX_INV_IMAG)
    inv = np.where(g2 > 0, inv, 0.0)
    weighted = up_i * inv
    if m is not None:
        weighted = weighted * m
        up_r = up_r * m
    total = np.sum(weighted, axis=-2, keepdims=True)
    grad = up_r + em * (total - weighted)
    if m is not None:
        grad = grad * m
    return grad
