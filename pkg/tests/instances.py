"""Random policy instances shared by the policy tests and the acceptance suite."""

import numpy as np

from fairfl.policy import DeviationModel, DeviceRound, SkipRound, policy_bounds
from fairfl.wireless import ChannelState, MtdProfile, dbm_to_watts, path_loss_factor


def random_problem(rng, deadline=None):
    """A feasible single-round policy problem with default-like radio constants."""
    while True:
        prof = MtdProfile(d=int(rng.integers(100, 301)), tau=5e-5, p_cp=rng.uniform(0.05, 0.2),
                          p_cir=rng.uniform(0.02, 0.15), rho=rng.uniform(0.3, 0.6), bandwidth=250e3,
                          distance=rng.uniform(50, 200), p_max=rng.uniform(0.2, 1.0),
                          j_min=int(rng.integers(1, 20)))
        ch = ChannelState(gain=float(rng.exponential(1.0)), kappa=path_loss_factor(32e6), alpha=4.0,
                          noise=dbm_to_watts(-174.0) * 250e3, gap=10 ** 0.98)
        problem = DeviceRound(prof, ch, deadline if deadline is not None else rng.uniform(0.6, 2.0), 875e3,
                              varrho=rng.uniform(0.2, 1.0))
        try:
            policy_bounds(problem)
        except SkipRound:
            continue
        return problem


def random_model(rng):
    return DeviationModel(beta1=rng.uniform(0.2, 1.0), beta2=rng.uniform(0.01, 0.5))
