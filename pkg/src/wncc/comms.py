"""Communication math: Gaussian tail utilities, matched-filter SINR and
finite-blocklength outage probabilities.

All functions are pure.  The channel dispersion is approximated by the
constant (log2 e)^2, so the outage of a payload of ``bits`` sent over ``slot_s``
seconds of bandwidth ``bandwidth_hz`` at SINR ``sinr`` is

    Q( ln2 * ( sqrt(n) * log2(1 + sinr) - bits / sqrt(n) ) ),   n = slot_s * bandwidth_hz.
"""
from __future__ import annotations

import math

import numpy as np

from dataclasses import dataclass

from .model import ASSOC_EPS, GainTensors

__all__ = [
    "CHANNEL_DISPERSION",
    "LinkOutcome",
    "q_func",
    "q_inv",
    "uplink_sinr",
    "downlink_sinr",
    "rate_margin",
    "outage",
    "overall_outage",
]

LOG2E = math.log2(math.e)

# Channel dispersion approximated as (log2 e)^2; the exact SINR-dependent
# dispersion is intentionally not used.
CHANNEL_DISPERSION = LOG2E ** 2


def q_func(x):
    """Gaussian tail probability Q(x), evaluated via the complementary error function."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * np.vectorize(math.erfc)(x / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def _q_scalar(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_inv(p: float) -> float:
    """Inverse Gaussian tail: the x with Q(x) = p, for p in (0, 1).

    Bracketing bisection on the complementary error integral followed by
    Newton refinement; accurate to ~1e-12 for p in [1e-9, 1 - 1e-9].
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"q_inv requires 0 < p < 1, got {p!r}")
    if p == 0.5:
        return 0.0
    # Q is decreasing; reduce to the upper-tail case via symmetry.
    if p > 0.5:
        return -q_inv(1.0 - p)
    lo, hi = 0.0, 1.0
    while _q_scalar(hi) > p:
        hi *= 2.0
        if hi > 1e3:  # pragma: no cover - p this small underflows Q first
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _q_scalar(mid) > p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    x = 0.5 * (lo + hi)
    # Newton polish: Q'(x) = -pdf(x).
    for _ in range(4):
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        x -= (p - _q_scalar(x)) / pdf
    return x


def _masked_interference(power: np.ndarray, gain: np.ndarray,
                         assoc: np.ndarray | None) -> np.ndarray:
    """Sum of cross-stream received powers per (m, k).

    ``gain[m, l, k]`` weights plant l's power at beam/receiver k.  Plants with
    association weight <= ASSOC_EPS at BS m do not transmit in that BS's slot
    and are excluded.
    """
    M, K, _ = gain.shape
    mask = np.ones((M, K)) if assoc is None else (np.asarray(assoc) > ASSOC_EPS).astype(float)
    p_eff = power * mask  # (M, K) over l
    total = np.einsum("ml,mlk->mk", p_eff, gain)
    own = np.einsum("mk,mkk->mk", p_eff, gain)
    return total - own


def uplink_sinr(power_up: np.ndarray, gains: GainTensors, noise_power_w: float,
                assoc: np.ndarray | None = None) -> np.ndarray:
    """Received SINR per (m, k) for uplink matched-filter reception."""
    direct = np.einsum("mk,mkk->mk", np.asarray(power_up, dtype=float), gains.uplink_gain)
    interf = _masked_interference(np.asarray(power_up, dtype=float), gains.uplink_gain, assoc)
    return direct / (interf + noise_power_w)


def downlink_sinr(power_down: np.ndarray, gains: GainTensors, noise_power_w: float,
                  assoc: np.ndarray | None = None) -> np.ndarray:
    """SINR per (m, k) at plant k's actuator for the matched-filter precoded stream."""
    direct = np.einsum("mk,mkk->mk", np.asarray(power_down, dtype=float), gains.downlink_gain)
    interf = _masked_interference(np.asarray(power_down, dtype=float), gains.downlink_gain, assoc)
    return direct / (interf + noise_power_w)


def rate_margin(sinr, slot_s, bandwidth_hz, bits):
    """Finite-blocklength rate surplus sqrt(n)*log2(1+sinr) - bits/sqrt(n).

    The outage constraint `outage <= eps` is equivalent to
    ``rate_margin >= q_inv(eps) * log2(e)``.
    """
    n = np.sqrt(np.asarray(slot_s, dtype=float) * bandwidth_hz)
    return n * np.log2(1.0 + np.asarray(sinr, dtype=float)) - np.asarray(bits, dtype=float) / n


def outage(sinr, slot_s, bandwidth_hz, bits):
    """Probability that the payload exceeds the finite-blocklength rate."""
    if np.any(np.asarray(slot_s) <= 0):
        raise ValueError("slot_s must be positive")
    if np.any(np.asarray(bits) <= 0):
        raise ValueError("bits must be positive")
    return q_func(math.log(2.0) * rate_margin(sinr, slot_s, bandwidth_hz, bits))


def overall_outage(up, down):
    """Round-trip failure probability 1 - (1 - up)(1 - down)."""
    return 1.0 - (1.0 - np.asarray(up, dtype=float)) * (1.0 - np.asarray(down, dtype=float))


@dataclass(frozen=True)
class LinkOutcome:
    """One link's finite-blocklength operating point."""

    sinr: float
    blocklength: float   # channel uses: slot_s * bandwidth_hz
    payload_bits: float
    outage_prob: float

    def __post_init__(self):
        if self.sinr < 0:
            raise ValueError("sinr must be nonnegative")
        if self.blocklength <= 0:
            raise ValueError("blocklength must be positive")
        if not 0.0 <= self.outage_prob <= 1.0:
            raise ValueError("outage_prob must lie in [0, 1]")

    @classmethod
    def evaluate(cls, sinr: float, slot_s: float, bandwidth_hz: float,
                 bits: float) -> "LinkOutcome":
        return cls(sinr=float(sinr), blocklength=float(slot_s * bandwidth_hz),
                   payload_bits=float(bits),
                   outage_prob=float(outage(sinr, slot_s, bandwidth_hz, bits)))
