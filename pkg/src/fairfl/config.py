"""Simulation configuration: a flat ``section.key = value`` text format.

Values are stored as written (dB and dBm included) so that a saved file
round-trips exactly; linear SI quantities are exposed as properties.
Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .wireless import db_to_linear, dbm_to_watts

BIT_GENERATORS = ("PCG64", "Philox", "SFC64", "MT19937")


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    devices: int = 10
    rounds: int = 200
    scheme: str = "proposed"
    seed: int = 2024
    workers: int = 1
    rng: str = "PCG64"


@dataclass
class TaskSection:
    loss: str = "logistic"
    features: int = 20
    samples: int = 200
    samples_spread: float = 0.0
    reg: float = 0.03
    feature_scale: float = 1.0
    truth_scale: float = 4.0
    eta_times_l: float = 1.0
    xi: float = 1.0


@dataclass
class PrivacySection:
    enabled: bool = True
    epsilon_g: float = 0.95
    delta_g: float = 1e-5
    epsilon_k: float = 0.95
    delta_k: float = 1e-5
    theta: float = 0.6
    clip: float = 0.01


@dataclass
class ChannelSection:
    alpha: float = 4.0
    carrier_hz: float = 32e6
    fading_scale: float = 1.0
    gap_db: float = 9.8
    n0_dbm_per_hz: float = -174.0
    bandwidth_hz: float = 250e3


@dataclass
class DeviceSection:
    distance_min_m: float = 50.0
    distance_max_m: float = 200.0
    tau_s_per_sample: float = 5e-5
    p_cp_w: float = 0.096
    p_cir_w: float = 0.0825
    rho: float = 0.45
    p_max_dbw: float = 0.0
    j_min: int = 10
    j_max_cap: int = 10_000


@dataclass
class RoundSection:
    # 875 kbit over 250 kHz needs on the order of a second; sub-millisecond deadlines are infeasible
    deadline_s: float = 1.0
    update_bits: float = 875e3


@dataclass
class PolicySection:
    varrho: float = 0.5
    energy_scale: float = 1.0
    fit_window: int = 8
    beta2_default: float = 0.0   # 0 selects the median computation-energy budget
    beta2_max: float = 1e3


@dataclass
class SimConfig:
    run: RunSection = field(default_factory=RunSection)
    task: TaskSection = field(default_factory=TaskSection)
    privacy: PrivacySection = field(default_factory=PrivacySection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    device: DeviceSection = field(default_factory=DeviceSection)
    round: RoundSection = field(default_factory=RoundSection)
    policy: PolicySection = field(default_factory=PolicySection)

    # linear-unit views
    @property
    def gap(self) -> float:
        return db_to_linear(self.channel.gap_db)

    @property
    def noise_w(self) -> float:
        return dbm_to_watts(self.channel.n0_dbm_per_hz) * self.channel.bandwidth_hz

    @property
    def p_max_w(self) -> float:
        return 10.0 ** (self.device.p_max_dbw / 10.0)

    def distances(self) -> np.ndarray:
        d = self.device
        return np.linspace(d.distance_min_m, d.distance_max_m, self.run.devices)

    def replace(self, **dotted) -> "SimConfig":
        """Copy with ``section__key=value`` overrides, validated."""
        new = from_flat({**to_flat(self), **{k.replace("__", "."): v for k, v in dotted.items()}})
        return new

    def validate(self) -> "SimConfig":
        errors = _violations(self)
        if errors:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
        return self


def _violations(cfg: SimConfig) -> list[str]:
    out = []

    def need(cond, key, constraint):
        if not cond:
            out.append(f"{key}: must satisfy {constraint}")

    r, t, p, c, d, rd, po = cfg.run, cfg.task, cfg.privacy, cfg.channel, cfg.device, cfg.round, cfg.policy
    need(r.devices >= 1, "run.devices", ">= 1")
    need(r.rounds >= 1, "run.rounds", ">= 1")
    need(r.scheme in ("proposed", "benchmark"), "run.scheme", "one of proposed|benchmark")
    need(r.seed >= 0, "run.seed", ">= 0")
    need(r.workers >= 1, "run.workers", ">= 1")
    need(r.rng in BIT_GENERATORS, "run.rng", f"one of {'|'.join(BIT_GENERATORS)}")
    need(t.loss in ("logistic", "least-squares"), "task.loss", "one of logistic|least-squares")
    need(t.features >= 1, "task.features", ">= 1")
    need(t.samples >= 1, "task.samples", ">= 1")
    need(0 <= t.samples_spread < 1, "task.samples_spread", "in [0, 1)")
    need(t.reg > 0, "task.reg", "> 0")
    need(t.feature_scale > 0, "task.feature_scale", "> 0")
    need(t.truth_scale >= 0, "task.truth_scale", ">= 0")
    need(0 < t.eta_times_l < 2, "task.eta_times_l", "in (0, 2) (contractive step)")
    need(t.xi > 0, "task.xi", "> 0")
    for key in ("epsilon_g", "epsilon_k"):
        need(0 < getattr(p, key) < 1, f"privacy.{key}", "epsilon in (0, 1)")
    for key in ("delta_g", "delta_k"):
        need(0 < getattr(p, key) < 1, f"privacy.{key}", "delta in (0, 1)")
    need(0 <= p.theta < 1, "privacy.theta", "in [0, 1)")
    need(p.clip > 0, "privacy.clip", "> 0")
    need(c.alpha > 0, "channel.alpha", "> 0")
    need(c.carrier_hz > 0, "channel.carrier_hz", "> 0")
    need(c.fading_scale > 0, "channel.fading_scale", "> 0")
    need(c.gap_db >= 0, "channel.gap_db", ">= 0 dB")
    need(c.bandwidth_hz > 0, "channel.bandwidth_hz", "> 0")
    need(0 < d.distance_min_m <= d.distance_max_m, "device.distance_min_m", "0 < min <= distance_max_m")
    need(d.tau_s_per_sample > 0, "device.tau_s_per_sample", "> 0")
    need(d.p_cp_w > 0, "device.p_cp_w", "> 0")
    need(d.p_cir_w >= 0, "device.p_cir_w", ">= 0")
    need(0 < d.rho <= 1, "device.rho", "in (0, 1]")
    need(1 <= d.j_min <= d.j_max_cap, "device.j_min", "1 <= j_min <= j_max_cap")
    need(rd.deadline_s > 0, "round.deadline_s", "> 0")
    need(rd.update_bits > 0, "round.update_bits", "> 0")
    need(po.varrho > 0, "policy.varrho", "> 0")
    need(po.energy_scale > 0, "policy.energy_scale", "> 0")
    need(po.fit_window >= 2, "policy.fit_window", ">= 2")
    need(po.beta2_default >= 0, "policy.beta2_default", ">= 0")
    need(po.beta2_max > 0, "policy.beta2_max", "> 0")
    return out


def to_flat(cfg: SimConfig) -> dict:
    flat = {}
    for sec in fields(cfg):
        section = getattr(cfg, sec.name)
        for f in fields(section):
            flat[f"{sec.name}.{f.name}"] = getattr(section, f.name)
    return flat


def from_flat(flat: dict) -> SimConfig:
    cfg = SimConfig()
    for key, value in flat.items():
        sec_name, _, name = key.partition(".")
        section = getattr(cfg, sec_name, None) if sec_name in {f.name for f in fields(cfg)} else None
        if section is None or name not in {f.name for f in fields(section)}:
            raise ConfigError(f"unknown key {key!r}")
        default = getattr(section, name)
        setattr(section, name, _coerce(key, value, type(default)))
    return cfg.validate()


def _coerce(key, value, kind):
    try:
        if kind is bool:
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("true", "false"):
                    raise ValueError(value)
                return low == "true"
            return bool(value)
        if kind is int:
            f = float(value)
            if not f.is_integer():
                raise ValueError(value)
            return int(f)
        if kind is float:
            f = float(value)
            if not math.isfinite(f):
                raise ValueError(value)
            return f
        return str(value).strip().strip('"')
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None


def parse_config_text(text: str) -> SimConfig:
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key in flat:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        flat[key] = value.strip()
    return from_flat(flat)


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def format_config(cfg: SimConfig) -> str:
    lines = []
    current = None
    for key, value in to_flat(cfg).items():
        section = key.split(".", 1)[0]
        if section != current:
            if current is not None:
                lines.append("")
            current = section
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def save_config(cfg: SimConfig, path) -> None:
    Path(path).write_text(format_config(cfg))
