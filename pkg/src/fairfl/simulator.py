"""Round loop of differentially private federated learning over a wireless uplink.

Both schemes share datasets and per-round channel draws for a given seed: every
random stream is keyed by (seed, purpose, round, device) and never by scheme.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from . import fl_core, privacy
from .config import SimConfig
from .policy import (DeviationModel, DeviceRound, SkipRound, benchmark_policy, optimal_policy)
from .wireless import LinkDown, MtdProfile, draw_channel, round_energy

log = logging.getLogger(__name__)

# stream purposes
_DATA, _CHANNEL, _LOCAL_NOISE, _GLOBAL_NOISE, _SHARED_NOISE, _TRUTH = range(6)

RECORD_FIELDS = ("round", "device", "scheme", "loss", "deviation", "iterations", "tx_power_w", "rate_bps",
                 "e_cp_j", "e_tx_j", "e_tot_j", "sigma_g", "utility", "skipped")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    device: int
    scheme: str
    loss: float = math.nan
    deviation: float = math.nan
    iterations: Optional[int] = None
    tx_power_w: float = math.nan
    rate_bps: float = math.nan
    e_cp_j: float = math.nan
    e_tx_j: float = math.nan
    e_tot_j: float = math.nan
    sigma_g: float = math.nan
    utility: float = math.nan
    skipped: bool = False


def rng_for(cfg: SimConfig, purpose: int, m: int = 0, k: int = 0) -> np.random.Generator:
    bitgen = getattr(np.random, cfg.run.rng)
    return np.random.Generator(bitgen(np.random.SeedSequence([cfg.run.seed, purpose, m, k])))


@dataclass
class MtdState:
    data: fl_core.Dataset
    profile: MtdProfile
    model: np.ndarray
    deviation_model: DeviationModel
    ledger: privacy.PrivacyLedger
    history: list = field(default_factory=list)
    e_cp_total: float = 0.0
    e_tx_total: float = 0.0


@dataclass
class ApState:
    w: np.ndarray
    loss_spec: fl_core.LossSpec
    ledger: privacy.PrivacyLedger


def make_datasets(cfg: SimConfig) -> list[fl_core.Dataset]:
    """i.i.d. synthetic data from one ground-truth linear model shared by all devices."""
    t = cfg.task
    truth = rng_for(cfg, _TRUTH).normal(scale=t.truth_scale, size=t.features)
    out = []
    for k in range(cfg.run.devices):
        rng = rng_for(cfg, _DATA, 0, k)
        n = t.samples
        if t.samples_spread > 0:
            n = int(round(t.samples * rng.uniform(1 - t.samples_spread, 1 + t.samples_spread)))
            n = max(n, 1)
        X = rng.normal(scale=t.feature_scale / math.sqrt(t.features), size=(n, t.features))
        z = X @ truth
        if t.loss == "logistic":
            y = np.where(rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-z)), 1.0, -1.0)
        else:
            y = z + rng.normal(scale=0.5, size=n)
        out.append(fl_core.Dataset(X, y))
    return out


def make_profiles(cfg: SimConfig, datasets) -> list[MtdProfile]:
    d = cfg.device
    return [MtdProfile(d=len(data), tau=d.tau_s_per_sample, p_cp=d.p_cp_w, p_cir=d.p_cir_w, rho=d.rho,
                       bandwidth=cfg.channel.bandwidth_hz, distance=float(r), p_max=cfg.p_max_w,
                       j_min=d.j_min, j_max_cap=d.j_max_cap)
            for data, r in zip(datasets, cfg.distances())]


def default_beta2(cfg: SimConfig, profile: MtdProfile) -> float:
    """Median scaled computation energy over the feasible iteration range at the mean channel."""
    if cfg.policy.beta2_default > 0:
        return cfg.policy.beta2_default
    t_tx = cfg.round.update_bits / (profile.bandwidth * math.log2(
        1 + cfg.channel.fading_scale * profile.p_max * _path_gain(cfg, profile) / (cfg.noise_w * cfg.gap)))
    j_hi = max(profile.j_min, min(profile.j_max_cap, (cfg.round.deadline_s - t_tx) / profile.seconds_per_iteration))
    j_mid = 0.5 * (profile.j_min + j_hi)
    return cfg.policy.energy_scale * j_mid * profile.seconds_per_iteration * profile.p_cp


def _path_gain(cfg, profile):
    from .wireless import path_loss_factor
    return path_loss_factor(cfg.channel.carrier_hz) / profile.distance ** cfg.channel.alpha


def setup(cfg: SimConfig) -> tuple[list[MtdState], ApState]:
    cfg.validate()
    datasets = make_datasets(cfg)
    spec = fl_core.LossSpec.from_data(cfg.task.loss, cfg.task.reg, datasets, cfg.task.eta_times_l, cfg.task.xi)
    profiles = make_profiles(cfg, datasets)
    p_k = privacy.PrivacyParams(cfg.privacy.epsilon_k, cfg.privacy.delta_k)
    p_g = privacy.PrivacyParams(cfg.privacy.epsilon_g, cfg.privacy.delta_g)
    v = cfg.task.features
    states = [MtdState(data=data, profile=prof, model=np.zeros(v),
                       deviation_model=DeviationModel(beta1=1.0, beta2=default_beta2(cfg, prof),
                                                      window=cfg.policy.fit_window, beta2_max=cfg.policy.beta2_max),
                       ledger=privacy.PrivacyLedger(p_k))
              for data, prof in zip(datasets, profiles)]
    return states, ApState(w=np.zeros(v), loss_spec=spec, ledger=privacy.PrivacyLedger(p_g))


@dataclass
class _Plan:
    problem: DeviceRound
    decision: object = None
    skipped: bool = False
    energy: object = None


def _plan_device(cfg: SimConfig, state: MtdState, m: int, k: int, scheme: str, spec) -> _Plan:
    ch = draw_channel(rng_for(cfg, _CHANNEL, m, k), cfg.channel.alpha, cfg.channel.carrier_hz,
                      cfg.channel.fading_scale, cfg.noise_w, cfg.gap)
    problem = DeviceRound(state.profile, ch, cfg.round.deadline_s, cfg.round.update_bits,
                          cfg.policy.varrho, cfg.policy.energy_scale)
    plan = _Plan(problem)
    try:
        if scheme == "proposed":
            plan.decision = optimal_policy(state.deviation_model, problem, spec)
        else:
            plan.decision = benchmark_policy(problem, state.deviation_model, spec)
        plan.energy = round_energy(plan.decision.j, plan.decision.power, state.profile, ch, cfg.round.update_bits)
    except (SkipRound, LinkDown) as exc:
        log.debug("round %d device %d skips: %s", m, k, exc)
        plan.skipped = True
    return plan


def _local_update(cfg, state, m, k, j, global_grad, local_grad, spec):
    h = fl_core.run_local_iterations(state.model, state.data, global_grad, spec, j, local_grad_at_w=local_grad)
    if cfg.privacy.enabled:
        h, sens = privacy.clip_to_sensitivity(h, cfg.privacy.clip)
        sigma = privacy.min_sigma(state.ledger.params)
        h = privacy.gaussian_perturb(h, sens, sigma, rng_for(cfg, _LOCAL_NOISE, m, k))
    return h


def run_round(cfg: SimConfig, states: list[MtdState], ap: ApState, m: int, scheme: str,
              pool: Optional[ThreadPoolExecutor] = None) -> list[RoundRecord]:
    """One communication round; returns one record per device in device order."""
    spec = ap.loss_spec
    K = len(states)
    mapper = pool.map if pool is not None else map

    plans = list(mapper(lambda k: _plan_device(cfg, states[k], m, k, scheme, spec), range(K)))
    active = [k for k in range(K) if not plans[k].skipped]

    if active:
        local_grads = {k: fl_core.local_gradient(states[k].model, states[k].data, spec) for k in active}
        global_grad = fl_core.average_gradient([local_grads[k] for k in active])
        updates = list(mapper(lambda k: _local_update(cfg, states[k], m, k, plans[k].decision.j, global_grad,
                                                      local_grads[k], spec), active))
        ap.w = fl_core.aggregate(ap.w, updates)
        dev = dict(zip(active, privacy.deviation_factors(ap.w, updates)))
    else:
        dev = {}

    p_g = ap.ledger.params
    sigmas = {}
    if cfg.privacy.enabled:
        if scheme == "benchmark":
            shared = privacy.gaussian_perturb(ap.w, cfg.privacy.clip, privacy.min_sigma(p_g),
                                              rng_for(cfg, _SHARED_NOISE, m, 0))
        for k in active:
            if scheme == "benchmark":
                sigmas[k] = privacy.min_sigma(p_g)
                states[k].model = shared.copy()
            else:
                sigmas[k] = privacy.adaptive_sigma(p_g, float(dev[k]), cfg.privacy.theta)
                states[k].model = privacy.gaussian_perturb(ap.w, cfg.privacy.clip, sigmas[k],
                                                           rng_for(cfg, _GLOBAL_NOISE, m, k))
    else:
        for k in active:
            sigmas[k] = 0.0
            states[k].model = ap.w.copy()

    ap.ledger.record_round()
    records = []
    for k, state in enumerate(states):
        state.ledger.record_round()
        plan = plans[k]
        if plan.skipped:
            records.append(RoundRecord(round=m, device=k, scheme=scheme, skipped=True))
            continue
        d, e = plan.decision, plan.energy
        state.e_cp_total += e.e_cp
        state.e_tx_total += e.e_tx
        if scheme == "proposed":
            state.history.append((cfg.policy.energy_scale * e.e_cp, float(dev[k])))
            del state.history[:-state.deviation_model.window]
            e_cp_hist, dev_hist = zip(*state.history)
            state.deviation_model.fit(e_cp_hist, dev_hist)
        records.append(RoundRecord(
            round=m, device=k, scheme=scheme,
            loss=fl_core.local_loss(state.model, state.data, spec), deviation=float(dev[k]),
            iterations=d.j, tx_power_w=d.power, rate_bps=e.rate, e_cp_j=e.e_cp, e_tx_j=e.e_tx,
            e_tot_j=e.e_tot, sigma_g=sigmas[k], utility=d.utility, skipped=False))
    return records


def iter_simulation(cfg: SimConfig) -> Iterator[RoundRecord]:
    """Stream records round by round."""
    cfg.validate()
    states, ap = setup(cfg)
    scheme = cfg.run.scheme
    pool = ThreadPoolExecutor(max_workers=cfg.run.workers) if cfg.run.workers > 1 else None
    try:
        for m in range(cfg.run.rounds):
            try:
                records = run_round(cfg, states, ap, m, scheme, pool)
            except Exception as exc:
                raise RuntimeError(f"{scheme} scheme failed in round {m}: {exc}") from exc
            yield from records
    finally:
        if pool is not None:
            pool.shutdown()


def run_simulation(cfg: SimConfig, sink: Optional[Callable[[RoundRecord], None]] = None) -> list[RoundRecord]:
    out = []
    for rec in iter_simulation(cfg):
        out.append(rec)
        if sink is not None:
            sink(rec)
    return out


def summarize(records, tail_fraction: float = 0.1) -> dict:
    """Per-device means and the cross-device aggregates used to compare schemes.

    ``final_loss`` averages the loss over the last ``tail_fraction`` of rounds.
    Skipped rounds are excluded from every mean.
    """
    records = [r for r in records]
    if not records:
        raise ValueError("no records to summarize")
    live = [r for r in records if not r.skipped]
    devices = sorted({r.device for r in records})
    rounds = sorted({r.round for r in records})

    per_device = {}
    for k in devices:
        mine = [r for r in live if r.device == k]
        col = lambda name: float(np.mean([getattr(r, name) for r in mine])) if mine else math.nan
        per_device[k] = {name: col(name) for name in
                         ("e_cp_j", "e_tx_j", "e_tot_j", "iterations", "rate_bps", "loss", "tx_power_w")}
        per_device[k]["skipped_rounds"] = sum(1 for r in records if r.device == k and r.skipped)

    mean_e = np.array([per_device[k]["e_tot_j"] for k in devices])
    loss_by_round = {m: [r.loss for r in live if r.round == m] for m in rounds}
    round_mean = np.array([np.mean(v) if v else math.nan for v in loss_by_round.values()])
    round_std = np.array([np.std(v) if v else math.nan for v in loss_by_round.values()])
    n_tail = max(1, int(math.ceil(tail_fraction * len(rounds))))
    return {
        "devices": len(devices),
        "rounds": len(rounds),
        "per_device": per_device,
        "energy_mean": float(np.nanmean(mean_e)),
        "energy_std": float(np.nanstd(mean_e)),
        "loss_mean": float(np.nanmean(round_mean)),
        "loss_std": float(np.nanmean(round_std)),
        "final_loss": float(np.nanmean(round_mean[-n_tail:])),
        "loss_by_round": round_mean.tolist(),
        "loss_std_by_round": round_std.tolist(),
        "skipped": sum(r.skipped for r in records),
    }
