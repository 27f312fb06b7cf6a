"""Uplink channel, rate, and per-round time/energy models for a single device."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class LinkDown(RuntimeError):
    """Raised when a device cannot push any bits through its channel this round."""


@dataclass(frozen=True)
class MtdProfile:
    """Static hardware, radio and data parameters of one device (SI units)."""

    d: int                 # samples held by the device
    tau: float             # seconds per sample per local iteration
    p_cp: float            # computation power, W
    p_cir: float           # transmitter circuitry power, W
    rho: float             # power amplifier drain efficiency
    bandwidth: float       # Hz
    distance: float        # m
    p_max: float           # W
    j_min: int = 1
    j_max_cap: int = 10_000

    def __post_init__(self):
        for name in ("d", "tau", "p_cp", "bandwidth", "distance", "p_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"MtdProfile.{name} must be positive, got {getattr(self, name)!r}")
        if self.p_cir < 0:
            raise ValueError("MtdProfile.p_cir must be non-negative")
        if not 0 < self.rho <= 1:
            raise ValueError("MtdProfile.rho must lie in (0, 1]")
        if self.j_min < 1 or self.j_max_cap < self.j_min:
            raise ValueError("need 1 <= j_min <= j_max_cap")

    @property
    def seconds_per_iteration(self) -> float:
        return self.d * self.tau


@dataclass(frozen=True)
class ChannelState:
    """One round's channel realization between a device and the AP."""

    gain: float        # |h|^2 (Rayleigh fading power)
    kappa: float       # (c / (4 pi f_c))^2
    alpha: float       # path-loss exponent
    noise: float       # receiver noise power, W
    gap: float         # modulation/coding SNR gap (linear)

    def __post_init__(self):
        if not (self.gain > 0 and self.kappa > 0 and self.noise > 0):
            raise ValueError("channel gain, kappa and noise power must be positive")
        if self.gap < 1:
            raise ValueError("SNR gap must be >= 1 (linear)")

    def snr_per_watt(self, distance: float) -> float:
        """Received SNR for 1 W of transmit power."""
        return self.kappa * self.gain / (self.noise * distance ** self.alpha)

    def power_scale(self, distance: float) -> float:
        """N r^alpha Gamma / (kappa |h|^2): transmit power per unit of effective SNR."""
        return self.gap / self.snr_per_watt(distance)


def path_loss_factor(f_c: float) -> float:
    return (SPEED_OF_LIGHT / (4.0 * math.pi * f_c)) ** 2


def draw_channel(rng: np.random.Generator, alpha: float, f_c: float, fading_scale: float,
                 noise: float, gap: float) -> ChannelState:
    """Draw a block-fading channel; the power gain is exponential with mean ``fading_scale``."""
    if fading_scale <= 0 or f_c <= 0:
        raise ValueError("fading scale and carrier frequency must be positive")
    gain = float(rng.exponential(fading_scale))
    # exponential draws can be exactly 0.0 with vanishing probability
    gain = max(gain, np.finfo(float).tiny)
    return ChannelState(gain=gain, kappa=path_loss_factor(f_c), alpha=alpha, noise=noise, gap=gap)


def snr(power: float, ch: ChannelState, distance: float) -> float:
    if power < 0:
        raise ValueError("transmit power must be non-negative")
    return power * ch.snr_per_watt(distance)


def rate(bandwidth: float, gamma: float, gap: float) -> float:
    """Achievable rate in bit/s, ``B log2(1 + gamma / Gamma)``."""
    if gamma < 0:
        raise ValueError("SNR must be non-negative")
    return bandwidth * math.log1p(gamma / gap) / math.log(2.0)


def tx_time(bits: float, r: float) -> float:
    if not r > 0:
        raise LinkDown(f"rate {r!r} b/s cannot carry {bits} bits")
    return bits / r


def tx_power_total(power: float, rho: float, p_cir: float) -> float:
    """Power drawn while transmitting: radiated power through the amplifier plus circuitry."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    return power / rho + p_cir


def cp_time(j: int, d: int, tau: float) -> float:
    if j < 0:
        raise ValueError("iteration count must be non-negative")
    return j * d * tau


@dataclass(frozen=True)
class RoundEnergy:
    e_cp: float
    e_tx: float
    tx_seconds: float
    rate: float

    @property
    def e_tot(self) -> float:
        return self.e_cp + self.e_tx


def round_energy(j: int, power: float, profile: MtdProfile, ch: ChannelState, bits: float) -> RoundEnergy:
    """Computation and transmission energy (J) of one round at ``j`` iterations and ``power`` W."""
    e_cp = cp_time(j, profile.d, profile.tau) * profile.p_cp
    r = rate(profile.bandwidth, snr(power, ch, profile.distance), ch.gap)
    t = tx_time(bits, r)
    e_tx = t * tx_power_total(power, profile.rho, profile.p_cir)
    return RoundEnergy(e_cp=e_cp, e_tx=e_tx, tx_seconds=t, rate=r)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)
