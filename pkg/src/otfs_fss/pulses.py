"""Raised-cosine / root-raised-cosine filters and the rectangular-pulse ambiguity.

Time arguments of the filter responses are in units of the symbol interval
``Ts``; removable singularities are evaluated by their analytic limits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .core import ConfigError

_SING_TOL = 1e-10


def eval_rc(t, rolloff: float):
    """Raised-cosine impulse response, unit peak, zero crossings at nonzero integers."""
    a = float(rolloff)
    if not 0.0 <= a <= 1.0:
        raise ConfigError(f"rolloff must lie in [0, 1], got {rolloff}")
    t = np.asarray(t, dtype=float)
    out = np.sinc(t)
    if a == 0.0:
        return out
    den = 1.0 - (2.0 * a * t) ** 2
    sing = np.abs(den) < _SING_TOL
    safe = np.where(sing, 1.0, den)
    out = out * np.cos(np.pi * a * t) / safe
    # limit at |t| = 1/(2a)
    return np.where(sing, np.pi / 4.0 * np.sinc(1.0 / (2.0 * a)), out)


def eval_rrc(t, rolloff: float):
    """Root-raised-cosine impulse response with unit energy per symbol interval."""
    a = float(rolloff)
    if not 0.0 <= a <= 1.0:
        raise ConfigError(f"rolloff must lie in [0, 1], got {rolloff}")
    t = np.asarray(t, dtype=float)
    if a == 0.0:
        return np.sinc(t)
    at_zero = np.abs(t) < _SING_TOL
    at_quarter = np.abs(np.abs(4.0 * a * t) - 1.0) < _SING_TOL
    bad = at_zero | at_quarter
    ts = np.where(bad, 0.5 / a + 0.123, t)
    num = np.sin(np.pi * ts * (1 - a)) + 4 * a * ts * np.cos(np.pi * ts * (1 + a))
    den = np.pi * ts * (1 - (4 * a * ts) ** 2)
    out = num / den
    v0 = 1.0 - a + 4.0 * a / np.pi
    vq = a / np.sqrt(2.0) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * a))
                             + (1 - 2 / np.pi) * np.cos(np.pi / (4 * a)))
    out = np.where(at_quarter, vq, out)
    return np.where(at_zero, v0, out)


@dataclass(frozen=True)
class RolloffFilter:
    """Truncated rolloff filter.

    ``span_symbols`` is the one-sided support in symbol intervals. ``kind`` is
    ``"rrc"`` for the transmit/receive pair or ``"rc"`` for their cascade.
    """

    rolloff: float = 0.4
    span_symbols: int = 4
    kind: str = "rrc"

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ConfigError(f"rolloff must lie in [0, 1], got {self.rolloff}")
        if int(self.span_symbols) != self.span_symbols or self.span_symbols < 1:
            raise ConfigError(f"span_symbols must be a positive integer, got {self.span_symbols}")
        if self.kind not in ("rc", "rrc"):
            raise ConfigError(f"filter kind must be 'rc' or 'rrc', got {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        f = eval_rc if self.kind == "rc" else eval_rrc
        return np.where(np.abs(t) <= self.span_symbols, f(t, self.rolloff), 0.0)

    def rc(self, t):
        """Cascade (transmit * receive) response, truncated to the same span."""
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) <= self.span_symbols, eval_rc(t, self.rolloff), 0.0)

    def rrc(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) <= self.span_symbols, eval_rrc(t, self.rolloff), 0.0)

    def energy(self, oversample: int = 64) -> float:
        """Integral of the squared response (in Ts units) by trapezoidal quadrature."""
        n = 2 * self.span_symbols * oversample
        t = np.linspace(-self.span_symbols, self.span_symbols, n + 1)
        return float(trapezoid(self(t) ** 2, t))


def noise_variance_after_rx_filter(sigma_n2: float, filt: RolloffFilter) -> float:
    """Variance of white noise of level ``sigma_n2`` after the receive filter."""
    if sigma_n2 < 0:
        raise ConfigError("sigma_n2 must be non-negative")
    if sigma_n2 == 0:
        return 0.0
    return float(sigma_n2) * filt.energy()


def rect_cross_ambiguity(t_offset, f_offset, T: float):
    """Cross-ambiguity of two unit-energy rectangular pulses of duration ``T``.

    Evaluates the integral of rect(t' - t) rect(t) exp(-j2 pi f (t' - t)) over t';
    zero once the pulses no longer overlap.
    """
    t = np.asarray(t_offset, dtype=float)
    f = np.asarray(f_offset, dtype=float)
    overlap = np.clip(T - np.abs(t), 0.0, None)
    start = np.maximum(0.0, t) - t  # lower limit of the shifted variable
    val = overlap / T * np.sinc(f * overlap) * np.exp(-2j * np.pi * f * (start + overlap / 2))
    return np.where(overlap > 0, val, 0.0 + 0.0j)
