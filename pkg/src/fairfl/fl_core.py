"""Local losses, the surrogate local problem, gradient iterations and aggregation.

Model vectors are plain 1-D float arrays.  Two strongly convex losses are
supported, each with a ridge penalty ``lam/2 ||w||^2``:

* ``"least-squares"``: ``1/2 (y - w.x)^2``
* ``"logistic"``: ``log(1 + exp(-y w.x))`` with labels in {-1, +1}
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

KINDS = ("least-squares", "logistic")


class NonContractiveStep(ValueError):
    """The step size gives a contraction factor outside (0, 1)."""


class AlreadyOptimal(ArithmeticError):
    """The surrogate problem is already solved at h = 0 (accuracy is 0 by convention)."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"expected X (d, s) and y (d,), got {X.shape} and {y.shape}")
        if X.shape[0] < 1:
            raise ValueError("dataset must hold at least one sample")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class LossSpec:
    """Loss family plus the optimization constants shared by all devices.

    ``mu`` and ``lipschitz`` are the strong-convexity and smoothness constants of the
    local losses; ``eta`` is the local step size and ``xi`` the weight of the global
    gradient in the surrogate problem.
    """

    kind: str
    lam: float
    eta: float
    xi: float = 1.0
    mu: float = float("nan")
    lipschitz: float = float("nan")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.lam < 0 or self.eta <= 0 or self.xi <= 0:
            raise ValueError("need lam >= 0, eta > 0, xi > 0")
        if not math.isnan(self.lipschitz):
            contraction_factor(self.eta, self.lipschitz)

    @classmethod
    def from_data(cls, kind: str, lam: float, datasets: Sequence[Dataset], eta_times_l: float = 1.0,
                  xi: float = 1.0) -> "LossSpec":
        """Constants valid for every dataset; ``eta = eta_times_l / L``."""
        mus, ls = zip(*(curvature_bounds(kind, lam, data) for data in datasets))
        mu, lip = min(mus), max(ls)
        if not mu > 0:
            raise ValueError("loss is not strongly convex on this data (increase lam)")
        return cls(kind=kind, lam=lam, eta=eta_times_l / lip, xi=xi, mu=mu, lipschitz=lip)

    @property
    def q(self) -> float:
        return contraction_factor(self.eta, self.lipschitz)


def curvature_bounds(kind: str, lam: float, data: Dataset) -> tuple[float, float]:
    """Closed-form (mu, L) for one dataset."""
    d = len(data)
    if kind == "least-squares":
        eig = np.linalg.eigvalsh(data.X.T @ data.X / d)
        return float(eig[0] + lam), float(eig[-1] + lam)
    if kind == "logistic":
        # the logistic curvature is at most 1/4 per sample
        eig_max = np.linalg.eigvalsh(data.X.T @ data.X / d)[-1]
        return float(lam), float(lam + eig_max / 4.0)
    raise ValueError(f"unknown loss kind {kind!r}")


def _check(w, data: Dataset):
    w = np.asarray(w, dtype=float)
    if w.shape != (data.dim,):
        raise ValueError(f"model has shape {w.shape}, data has {data.dim} features")
    return w


def local_loss(w, data: Dataset, spec: LossSpec) -> float:
    w = _check(w, data)
    z = data.X @ w
    if spec.kind == "least-squares":
        per_sample = 0.5 * (data.y - z) ** 2
    else:
        per_sample = np.logaddexp(0.0, -data.y * z)
    return float(per_sample.mean() + 0.5 * spec.lam * (w @ w))


def local_gradient(w, data: Dataset, spec: LossSpec) -> np.ndarray:
    w = _check(w, data)
    z = data.X @ w
    if spec.kind == "least-squares":
        residual = z - data.y
    else:
        # d/dz log(1 + e^{-yz}) = -y sigmoid(-yz)
        residual = -data.y * _sigmoid(-data.y * z)
    return data.X.T @ residual / len(data) + spec.lam * w


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def average_gradient(grads: Sequence[np.ndarray]) -> np.ndarray:
    if len(grads) == 0:
        raise ValueError("cannot average an empty list of gradients")
    stacked = np.stack([np.asarray(g, dtype=float) for g in grads])
    return stacked.mean(axis=0)


def aggregate(w, updates: Sequence[np.ndarray]) -> np.ndarray:
    """New global model: ``w`` plus the mean of the device updates."""
    if len(updates) == 0:
        raise ValueError("cannot aggregate an empty list of updates")
    w = np.asarray(w, dtype=float)
    stacked = np.stack([np.asarray(h, dtype=float) for h in updates])
    if stacked.shape[1:] != w.shape:
        raise ValueError("update and model dimensions differ")
    return w + stacked.mean(axis=0)


def surrogate_objective(w, h, data: Dataset, local_grad_at_w, global_grad, spec: LossSpec) -> float:
    """``L(w + h) - (grad L(w) - xi grad G(w)) . h``."""
    w = _check(w, data)
    h = np.asarray(h, dtype=float)
    shift = np.asarray(local_grad_at_w) - spec.xi * np.asarray(global_grad)
    return local_loss(w + h, data, spec) - float(shift @ h)


def surrogate_gradient(w, h, data: Dataset, local_grad_at_w, global_grad, spec: LossSpec) -> np.ndarray:
    w = _check(w, data)
    h = np.asarray(h, dtype=float)
    return local_gradient(w + h, data, spec) - local_grad_at_w + spec.xi * np.asarray(global_grad)


def run_local_iterations(w, data: Dataset, global_grad, spec: LossSpec, j: int,
                         local_grad_at_w=None) -> np.ndarray:
    """``j`` gradient steps on the surrogate problem starting from h = 0."""
    if j < 0:
        raise ValueError("iteration count must be non-negative")
    w = _check(w, data)
    g_w = local_gradient(w, data, spec) if local_grad_at_w is None else local_grad_at_w
    h = np.zeros_like(w)
    for it in range(j):
        h = h - spec.eta * surrogate_gradient(w, h, data, g_w, global_grad, spec)
        if not np.isfinite(h).all():
            raise FloatingPointError(f"non-finite local update at iteration {it + 1} of {j}")
    return h


def solve_surrogate(w, data: Dataset, global_grad, spec: LossSpec, tol: float = 1e-12,
                    max_iter: int = 1_000_000, local_grad_at_w=None) -> np.ndarray:
    """Reference minimizer h* of the surrogate problem (gradient method to ``||grad|| <= tol``)."""
    w = _check(w, data)
    g_w = local_gradient(w, data, spec) if local_grad_at_w is None else local_grad_at_w
    h = np.zeros_like(w)
    for _ in range(max_iter):
        g = surrogate_gradient(w, h, data, g_w, global_grad, spec)
        if np.linalg.norm(g) <= tol:
            return h
        h = h - spec.eta * g
    raise RuntimeError(f"surrogate solve did not reach gradient norm {tol} in {max_iter} iterations")


def accuracy_ratio(w, h, h_star, data: Dataset, global_grad, spec: LossSpec, local_grad_at_w=None) -> float:
    """Relative suboptimality ``(F(h) - F(h*)) / (F(0) - F(h*))`` of a local update."""
    g_w = local_gradient(w, data, spec) if local_grad_at_w is None else local_grad_at_w
    F = lambda x: surrogate_objective(w, x, data, g_w, global_grad, spec)
    f_star = F(h_star)
    denom = F(np.zeros_like(h_star)) - f_star
    if denom <= 1e-15:
        raise AlreadyOptimal(f"F(0) - F(h*) = {denom:.3g}")
    return (F(h) - f_star) / denom


def contraction_factor(eta: float, lipschitz: float) -> float:
    """``eta^2 L^2 / 2 - eta L + 1``; only ``0 < eta L < 2`` gives a value in (0, 1)."""
    x = eta * lipschitz
    if not 0 < x < 2:
        raise NonContractiveStep(f"non-contractive step size: eta * L = {x:.6g} outside (0, 2)")
    return 0.5 * x * x - x + 1.0


def iteration_lower_bound(phi: float, eta: float, lipschitz: float) -> int:
    """Iterations after which the accuracy bound drops to ``phi``."""
    if not 0 < phi <= 1:
        raise ValueError("phi must lie in (0, 1]")
    q = contraction_factor(eta, lipschitz)
    if phi == 1:
        return 0
    # guard against log-ratio round-off landing just above an integer
    return max(0, math.ceil(math.log(phi) / math.log(q) - 1e-12))


def accuracy_upper_bound(j: int, eta: float, lipschitz: float) -> float:
    if j < 0:
        raise ValueError("iteration count must be non-negative")
    return contraction_factor(eta, lipschitz) ** j
