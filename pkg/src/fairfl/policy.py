"""Per-device computation/transmission policies.

A device picks an iteration count ``j`` and a spectral efficiency ``Z`` (nats per
symbol) each round.  Transmit power and rate follow from ``Z``:

    P(Z) = A (e^Z - 1),    R(Z) = B Z / ln 2,    A = N r^alpha Gamma / (kappa |h|^2)

and the transmission energy becomes ``V b (e^Z + c) / Z``, which is convex in
``Z``.  All energies entering the utility are multiplied by ``energy_scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .wireless import ChannelState, MtdProfile

LN2 = math.log(2.0)


class SkipRound(RuntimeError):
    """The device has no feasible (j, P) pair this round."""


class DeviationModel:
    """Exponential model of the deviation factor a device expects for a computation budget.

    ``predict(e_cp) = beta1 * exp(-e_cp / beta2)``.  ``fit`` regresses ``log E`` on
    ``e_cp`` over a sliding window of observed rounds.

    Args:
        beta1: Deviation at zero computation energy, in (0, 1].
        beta2: Energy scale of the decay (same units as ``e_cp``).
        window: Number of most recent observations used by ``fit``.
        beta2_max: Value used when the data show no decay with energy.
    """

    def __init__(self, beta1=1.0, beta2=0.05, window=8, beta2_max=1e3):
        self.beta1 = beta1
        self.beta2 = beta2
        self.window = window
        self.beta2_max = beta2_max

    def get_params(self, deep=True):
        return {"beta1": self.beta1, "beta2": self.beta2, "window": self.window,
                "beta2_max": self.beta2_max}

    def set_params(self, **params):
        for key, value in params.items():
            if key not in self.get_params():
                raise ValueError(f"invalid parameter {key!r} for DeviationModel")
            setattr(self, key, value)
        return self

    def _validate(self):
        if not (0 < self.beta1 <= 1 and self.beta2 > 0 and self.beta2_max > 0):
            raise ValueError(f"invalid deviation model {self.get_params()}")
        if self.window < 2:
            raise ValueError("window must hold at least two observations")

    def fit(self, e_cp, deviation):
        """Fit on paired observations; with fewer than two usable points keep the defaults.

        Points with zero deviation carry no information in the log domain and are
        dropped.  If every usable point has the same energy, the previous
        parameters are kept.
        """
        self._validate()
        e_cp = np.asarray(e_cp, dtype=float)[-self.window:]
        deviation = np.asarray(deviation, dtype=float)[-self.window:]
        if e_cp.shape != deviation.shape:
            raise ValueError("e_cp and deviation must have the same length")
        usable = deviation > 0
        x, y = e_cp[usable], np.log(deviation[usable])
        self.n_used_ = int(x.size)
        if x.size < 2 or np.ptp(x) <= 1e-15 * max(1.0, np.abs(x).max()):
            return self
        slope, intercept = np.polyfit(x, y, 1)
        self.beta1 = float(min(math.exp(intercept), 1.0))
        if slope < 0:
            self.beta2 = float(min(-1.0 / slope, self.beta2_max))
        else:
            self.beta2 = float(self.beta2_max)
        return self

    def predict(self, e_cp):
        return self.beta1 * np.exp(-np.asarray(e_cp, dtype=float) / self.beta2)


def expected_deviation(model: DeviationModel, e_cp: float) -> float:
    if e_cp < 0:
        raise ValueError("computation energy must be non-negative")
    return float(model.predict(e_cp))


def fit_deviation_model(history: Sequence[tuple[float, float]], default_beta2: float,
                        previous: Optional[DeviationModel] = None, window: int = 8) -> DeviationModel:
    """Functional wrapper: refit a copy of ``previous`` (or fresh defaults) on ``history``."""
    if previous is None:
        model = DeviationModel(beta1=1.0, beta2=default_beta2, window=window)
    else:
        model = DeviationModel(**previous.get_params())
    if not history:
        return model
    e_cp, dev = zip(*history)
    return model.fit(e_cp, dev)


@dataclass(frozen=True)
class DeviceRound:
    """Everything a device needs to choose its policy for one round.

    ``deadline`` is the round time budget T (s), ``bits`` the update size V (bit),
    ``varrho`` the utility-energy parameter.
    """

    profile: MtdProfile
    channel: ChannelState
    deadline: float
    bits: float
    varrho: float = 0.5
    energy_scale: float = 1.0

    def __post_init__(self):
        if not (self.deadline > 0 and self.bits > 0 and self.varrho > 0 and self.energy_scale > 0):
            raise ValueError("deadline, bits, varrho and energy_scale must be positive")

    # channel-derived constants
    @property
    def a(self) -> float:
        return self.channel.power_scale(self.profile.distance)

    @property
    def b(self) -> float:
        return self.a * LN2 / (self.profile.rho * self.profile.bandwidth)

    @property
    def c(self) -> float:
        return self.profile.rho * self.profile.p_cir / self.a - 1.0

    @property
    def t_iter(self) -> float:
        return self.profile.seconds_per_iteration

    def z_of_p(self, power):
        if np.any(np.asarray(power) < 0):
            raise ValueError("transmit power must be non-negative")
        return np.log1p(np.asarray(power, dtype=float) / self.a)

    def p_of_z(self, z):
        if np.any(np.asarray(z) < 0):
            raise ValueError("Z must be non-negative")
        return self.a * np.expm1(np.asarray(z, dtype=float))

    def rate_of_z(self, z):
        return self.profile.bandwidth * np.asarray(z, dtype=float) / LN2

    def tx_seconds(self, z):
        return self.bits * LN2 / (self.profile.bandwidth * np.asarray(z, dtype=float))

    def z_deadline(self, j):
        """Smallest Z that still meets the deadline after ``j`` iterations."""
        slack = self.deadline - np.asarray(j, dtype=float) * self.t_iter
        with np.errstate(divide="ignore"):
            return np.where(slack > 0, self.bits * LN2 / (self.profile.bandwidth * np.maximum(slack, 0)),
                            np.inf)

    def j_deadline(self, z):
        """Continuous iteration count that exactly fills the deadline at ``Z``."""
        return (self.deadline - self.tx_seconds(z)) / self.t_iter

    def e_cp(self, j):
        return np.asarray(j, dtype=float) * self.t_iter * self.profile.p_cp

    def e_tx(self, z):
        """Transmission energy in joules, ``V b (e^Z + c) / Z``."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ValueError("Z must be positive")
        return self.bits * self.b * (np.exp(z) + self.c) / z

    def z_energy_efficient(self) -> float:
        """Z minimizing transmission energy: the root of ``(Z - 1) e^Z = c``."""
        c = self.c
        g = lambda z: (z - 1.0) * math.exp(z) - c
        hi = 1.0
        while g(hi) < 0:
            hi *= 2.0
        return _bisect(g, 0.0, hi)


def _bisect(func, lo, hi, max_iter=200, xtol=1e-12):
    """Root of ``func`` on [lo, hi] assuming a sign change; returns the endpoint with smaller |f|."""
    flo = func(lo)
    fhi = func(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError("no sign change in bracket")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fmid = func(mid)
        if not math.isfinite(fmid):
            raise FloatingPointError(f"non-finite residual {fmid} at {mid} in [{lo}, {hi}]")
        if fmid == 0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
        if hi - lo <= xtol * max(1.0, abs(lo)):
            # keep shrinking to machine precision; the residual scale can be large
            continue
    return lo if abs(flo) <= abs(fhi) else hi


def _bisect_vec(func, lo, hi, increasing, n_iter=100):
    """Vectorized bisection for elementwise monotone ``func`` with ``func(lo) <= 0 <= func(hi)``
    when ``increasing`` (reversed otherwise)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    sign = np.where(increasing, 1.0, -1.0)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = sign * func(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def utility(model: DeviationModel, j, z, problem: DeviceRound):
    """Expected utility of running ``j`` iterations and transmitting at ``Z``.

    ``U = -beta1 exp(-E_cp / beta2) + beta1 - E (E - varrho)`` with scaled energies.
    """
    s = problem.energy_scale
    e_cp = s * problem.e_cp(j)
    e_tot = e_cp + s * problem.e_tx(z)
    return -model.beta1 * np.exp(-e_cp / model.beta2) + model.beta1 - e_tot * (e_tot - problem.varrho)


@dataclass(frozen=True)
class PolicyBounds:
    p_min: float
    p_max: float
    j_min: int
    j_max: int
    z_min: float
    z_max: float
    compute_capped: bool = False


def p_min(problem: DeviceRound, j_min: Optional[int] = None) -> float:
    """Transmit power that leaves exactly enough time for ``j_min`` iterations."""
    j_min = problem.profile.j_min if j_min is None else j_min
    residual = problem.deadline - j_min * problem.t_iter
    if residual <= 0:
        raise SkipRound(f"deadline infeasible: {j_min} iterations need {j_min * problem.t_iter:.6g} s "
                        f">= T = {problem.deadline:.6g} s")
    exponent = problem.bits * LN2 / (problem.profile.bandwidth * residual)
    return problem.a * math.expm1(exponent)


def j_max(problem: DeviceRound, power: Optional[float] = None) -> int:
    """Largest iteration count that fits beside transmission at ``power`` (default P_max).

    Returns 0 when transmission alone overruns the deadline.
    """
    power = problem.profile.p_max if power is None else power
    z = float(problem.z_of_p(power))
    if z <= 0:
        raise SkipRound("no rate at the requested power")
    j = math.floor(problem.j_deadline(z) + 1e-9)
    return max(0, min(j, problem.profile.j_max_cap))


def policy_bounds(problem: DeviceRound) -> PolicyBounds:
    prof = problem.profile
    pmin = p_min(problem)
    z_min = problem.bits * LN2 / (prof.bandwidth * (problem.deadline - prof.j_min * problem.t_iter))
    z_max = float(problem.z_of_p(prof.p_max))
    if z_min > z_max * (1 + 1e-12):
        raise SkipRound(f"P_min = {pmin:.4g} W exceeds P_max = {prof.p_max:.4g} W")
    z_min = min(z_min, z_max)
    jmax_raw = math.floor(problem.j_deadline(z_max) + 1e-9)
    jmax = min(jmax_raw, prof.j_max_cap)
    if jmax < prof.j_min:
        raise SkipRound(f"j_max = {jmax} below j_min = {prof.j_min}")
    return PolicyBounds(p_min=min(pmin, prof.p_max), p_max=prof.p_max, j_min=prof.j_min, j_max=jmax,
                        z_min=z_min, z_max=z_max, compute_capped=jmax < jmax_raw)


def kkt_residual(z, model: DeviationModel, problem: DeviceRound):
    """LHS - RHS of the deadline-active stationarity condition in Z.

    On the curve where computation fills the deadline this equals
    ``-(dU/dZ) / (dE_cp/dZ)``, so a -/+ sign change brackets a utility maximum.
    """
    s = problem.energy_scale
    p_cp = s * problem.profile.p_cp
    b = s * problem.b
    c = problem.c
    bw = problem.profile.bandwidth
    v = problem.bits
    T = problem.deadline
    z = np.asarray(z, dtype=float)
    t_tx = v * LN2 / (bw * z)
    lhs = (2 * p_cp * (T - t_tx) + 2 * v * b / z * (np.exp(z) + c) - problem.varrho) * \
          (bw * b / (p_cp * LN2) * ((z - 1) * np.exp(z) - c) + 1)
    rhs = model.beta1 / model.beta2 * np.exp(p_cp / model.beta2 * (t_tx - T))
    return lhs - rhs


def solve_zhat(model: DeviationModel, problem: DeviceRound, bounds: Optional[PolicyBounds] = None):
    """Bracketed bisection for the deadline-active stationary Z; ``None`` without a sign change."""
    bounds = policy_bounds(problem) if bounds is None else bounds
    z_floor = problem.bits * LN2 / (problem.profile.bandwidth * problem.deadline)
    lo = max(bounds.z_min, z_floor)
    hi = bounds.z_max
    if not hi > lo:
        return None
    f = lambda z: float(kkt_residual(z, model, problem))
    flo, fhi = f(lo), f(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise FloatingPointError(f"non-finite KKT residual at bracket ends: f({lo})={flo}, f({hi})={fhi}")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        return None
    return _bisect(f, lo, hi)


@dataclass(frozen=True)
class PolicyDecision:
    j: int
    z: float
    power: float
    rate: float
    utility: float
    phi_bound: float = float("nan")
    zhat: Optional[float] = None
    case: str = ""
    bounds: Optional[PolicyBounds] = field(default=None, compare=False)

    def total_seconds(self, problem: DeviceRound) -> float:
        return self.j * problem.t_iter + float(problem.tx_seconds(self.z))


def best_z_per_j(model: DeviationModel, problem: DeviceRound, js, bounds: PolicyBounds):
    """Exact utility-maximizing Z for each integer j (vectorized over ``js``).

    For fixed j the utility depends on Z only through the total energy, and the
    energy is convex in Z, so the optimum is the energy minimizer, a level-set
    crossing at ``E = varrho / 2``, or an interval endpoint.
    """
    s = problem.energy_scale
    js = np.asarray(js, dtype=float)
    zl = np.clip(problem.z_deadline(js), bounds.z_min, bounds.z_max)
    zh = np.full_like(zl, bounds.z_max)
    target = problem.varrho / 2 - s * problem.e_cp(js)
    etx = lambda z: s * problem.e_tx(z)
    ze = np.clip(problem.z_energy_efficient(), zl, zh)
    e_lo, e_e, e_hi = etx(zl), etx(ze), etx(zh)

    z = ze.copy()
    short = e_e < target
    left = short & (e_lo >= target)
    right = short & ~left & (e_hi >= target)
    neither = short & ~left & ~right
    if left.any():
        z[left] = _bisect_vec(lambda x: etx(x) - target[left], zl[left], ze[left], increasing=False)
    if right.any():
        z[right] = _bisect_vec(lambda x: etx(x) - target[right], ze[right], zh[right], increasing=True)
    if neither.any():
        z[neither] = np.where(e_lo[neither] >= e_hi[neither], zl[neither], zh[neither])
    return z


def _decision(model, problem, j, z, bounds, loss_spec=None, zhat=None, case=""):
    from .fl_core import accuracy_upper_bound

    power = float(problem.p_of_z(z))
    phi = accuracy_upper_bound(j, loss_spec.eta, loss_spec.lipschitz) if loss_spec is not None else float("nan")
    return PolicyDecision(j=int(j), z=float(z), power=min(power, problem.profile.p_max),
                          rate=float(problem.rate_of_z(z)), utility=float(utility(model, j, z, problem)),
                          phi_bound=phi, zhat=zhat, case=case, bounds=bounds)


def kkt_candidate(model: DeviationModel, problem: DeviceRound, bounds: PolicyBounds):
    """Deadline-active KKT solution with j rounded to an integer.

    Returns ``(j, z, zhat)``.  Z* is ``max(Z_min, zhat)`` clamped to Z_max; without a
    root the better deadline-saturated boundary is used.  j* = min(deadline j, j_max)
    is evaluated at floor and ceil with each one's deadline-saturating Z.
    """
    zhat = solve_zhat(model, problem, bounds)
    if zhat is not None and zhat < bounds.z_max:
        z_star = max(bounds.z_min, zhat)
    elif zhat is not None:
        z_star = bounds.z_max
    else:
        ends = [bounds.z_min, bounds.z_max]
        j_ends = [min(problem.j_deadline(z), bounds.j_max) for z in ends]
        u = [utility(model, j, z, problem) for j, z in zip(j_ends, ends)]
        z_star = ends[int(np.argmax(u))]
    j_cont = min(float(problem.j_deadline(z_star)), bounds.j_max)
    best = None
    for j in {math.floor(j_cont + 1e-9), math.ceil(j_cont - 1e-9)}:
        if not bounds.j_min <= j <= bounds.j_max:
            continue
        z = float(np.clip(problem.z_deadline(j), bounds.z_min, bounds.z_max))
        u = float(utility(model, j, z, problem))
        if best is None or u > best[2]:
            best = (j, z, u)
    return best[0], best[1], zhat


def optimal_policy(model: DeviationModel, problem: DeviceRound, loss_spec=None) -> PolicyDecision:
    """Utility-maximizing (j, P) for one round.

    The deadline-active stationary point is computed first.  Because j is integral
    and the deadline need not bind when the energy-efficient rate exceeds the
    deadline-saturating one, every integer j is also scored at its exact best Z;
    the deadline-active point is kept unless something else is strictly better.
    """
    bounds = policy_bounds(problem)
    j_t, z_t, zhat = kkt_candidate(model, problem, bounds)
    u_t = float(utility(model, j_t, z_t, problem))

    js = np.arange(bounds.j_min, bounds.j_max + 1)
    zs = best_z_per_j(model, problem, js, bounds)
    us = utility(model, js, zs, problem)
    i = int(np.argmax(us))
    if us[i] > u_t + 1e-12 * (1 + abs(u_t)):
        return _decision(model, problem, js[i], zs[i], bounds, loss_spec, zhat, case="deadline-slack")
    return _decision(model, problem, j_t, z_t, bounds, loss_spec, zhat, case="deadline-active")


def brute_force_policy(model: DeviationModel, problem: DeviceRound, grid: int = 200,
                       loss_spec=None) -> PolicyDecision:
    """Exhaustive search over integer j x a uniform Z grid of the feasible box (test oracle)."""
    if grid < 2:
        raise ValueError("grid must have at least 2 points per axis")
    bounds = policy_bounds(problem)
    n_j = bounds.j_max - bounds.j_min + 1
    if n_j <= grid:
        js = np.arange(bounds.j_min, bounds.j_max + 1)
    else:
        js = np.unique(np.round(np.linspace(bounds.j_min, bounds.j_max, grid)).astype(int))
    zs = np.linspace(bounds.z_min, bounds.z_max, grid)
    J, Z = np.meshgrid(js, zs, indexing="ij")
    feasible = J * problem.t_iter + problem.tx_seconds(Z) <= problem.deadline * (1 + 1e-12)
    if not feasible.any():
        raise SkipRound("empty feasible grid")
    U = np.where(feasible, utility(model, J, Z, problem), -np.inf)
    k = np.unravel_index(np.argmax(U), U.shape)
    return _decision(model, problem, J[k], Z[k], bounds, loss_spec, case="grid")


def benchmark_policy(problem: DeviceRound, model: Optional[DeviationModel] = None,
                     loss_spec=None) -> PolicyDecision:
    """Maximum effort: transmit at P_max and run as many iterations as the deadline allows."""
    bounds = policy_bounds(problem)
    model = DeviationModel() if model is None else model
    return _decision(model, problem, bounds.j_max, bounds.z_max, bounds, loss_spec, case="benchmark")
