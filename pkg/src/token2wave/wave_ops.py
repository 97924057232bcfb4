"""Combining two waves: interference (complex sum) and modulation (complex product).

Everything operates on the Cartesian form. Combined waves are not mapped back
to the polar (magnitude, phase) form; they carry on as raw complex matrices.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import DimensionError


class CartesianWave(NamedTuple):
    real: np.ndarray
    imag: np.ndarray

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z)
        return cls(np.real(z).astype(np.float64), np.imag(z).astype(np.float64))

    def to_complex(self):
        return self.real + 1j * self.imag

    def abs(self):
        return np.hypot(self.real, self.imag)

    def angle(self):
        return np.arctan2(self.imag, self.real)


def _as_wave(z, name):
    real = np.asarray(z[0], dtype=np.float64)
    imag = np.asarray(z[1], dtype=np.float64)
    if real.shape != imag.shape:
        raise DimensionError(f"{name}: real {real.shape} and imag {imag.shape} differ")
    return CartesianWave(real, imag)


def _pair(z, z2):
    z, z2 = _as_wave(z, "z"), _as_wave(z2, "z2")
    if z.real.shape != z2.real.shape:
        raise DimensionError(f"wave shapes differ: {z.real.shape} vs {z2.real.shape}")
    return z, z2


def interference(z, z2):
    z, z2 = _pair(z, z2)
    return CartesianWave(z.real + z2.real, z.imag + z2.imag)


def interference_term(z, z2):
    """``2 Re(z conj(z2))``, i.e. ``2 |z| |z2| cos(phase difference)``."""
    z, z2 = _pair(z, z2)
    return 2.0 * (z.real * z2.real + z.imag * z2.imag)


def modulation(z, z2):
    z, z2 = _pair(z, z2)
    return CartesianWave(
        z.real * z2.real - z.imag * z2.imag,
        z.real * z2.imag + z.imag * z2.real,
    )


def vjp_interference(z, z2, upstream):
    z, z2 = _pair(z, z2)
    up = _as_wave(upstream, "upstream")
    if up.real.shape != z.real.shape:
        raise DimensionError(f"upstream shape {up.real.shape} does not match {z.real.shape}")
    return CartesianWave(up.real, up.imag), CartesianWave(up.real.copy(), up.imag.copy())


def vjp_modulation(z, z2, upstream):
    z, z2 = _pair(z, z2)
    up = _as_wave(upstream, "upstream")
    if up.real.shape != z.real.shape:
        raise DimensionError(f"upstream shape {up.real.shape} does not match {z.real.shape}")
    grad_z = CartesianWave(
        up.real * z2.real + up.imag * z2.imag,
        -up.real * z2.imag + up.imag * z2.real,
    )
    grad_z2 = CartesianWave(
        up.real * z.real + up.imag * z.imag,
        -up.real * z.imag + up.imag * z.real,
    )
    return grad_z, grad_z2


COMBINERS = {
    "interference": (interference, vjp_interference),
    "modulation": (modulation, vjp_modulation),
}
