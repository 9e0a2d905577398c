"""Single-sample and batched Greedy-GQ update directions, projection and step sizes."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..features import FeatureMap
from ..mdp import Observation, ObservationBatch
from ..policy import SoftmaxSpec, softmax_parts


@dataclass(frozen=True)
class LearnerState:
    theta: np.ndarray
    omega: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    @classmethod
    def zeros(cls, n_features: int, radius: float) -> "LearnerState":
        return cls(np.zeros(n_features), np.zeros(n_features), radius)


def project(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the ball of the given radius."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    norm = np.linalg.norm(v)
    if norm <= radius:
        return v
    return v * (radius / norm)


def batch_terms(features: FeatureMap, spec: SoftmaxSpec, gamma: float, theta, batch: ObservationBatch):
    """TD errors, current features and next-state value gradients for a batch.

    Returns ``(delta, phi, phihat)`` with shapes ``(B,)``, ``(B, N)``, ``(B, N)``.
    """
    phi = features.phi[batch.s, batch.a]
    _, _, v_next, phihat = softmax_parts(spec.sigma, features.phi[batch.s_next], theta)
    delta = batch.r + gamma * v_next - phi @ theta
    return delta, phi, phihat


def batch_directions(features, spec, gamma, theta, omega, batch: ObservationBatch):
    """Per-sample ``G`` and ``H`` directions, each of shape ``(B, N)``."""
    delta, phi, phihat = batch_terms(features, spec, gamma, theta, batch)
    phi_w = phi @ omega
    G = delta[:, None] * phi - gamma * phi_w[:, None] * phihat
    H = (delta - phi_w)[:, None] * phi
    return G, H


def _single(obs) -> tuple[ObservationBatch, bool]:
    if isinstance(obs, Observation):
        return ObservationBatch.of(obs), True
    return ObservationBatch.of(obs), False


def td_error(features: FeatureMap, spec: SoftmaxSpec, theta, obs, gamma: float):
    """``r + gamma * Vbar(s') - theta . phi(s, a)`` for one observation or a batch."""
    batch, one = _single(obs)
    delta = batch_terms(features, spec, gamma, np.asarray(theta, dtype=float), batch)[0]
    return float(delta[0]) if one else delta


def g_direction(features, spec, theta, omega, obs, gamma: float):
    batch, one = _single(obs)
    G, _ = batch_directions(features, spec, gamma, np.asarray(theta, dtype=float),
                            np.asarray(omega, dtype=float), batch)
    return G[0] if one else G


def h_direction(features, spec, theta, omega, obs, gamma: float):
    batch, one = _single(obs)
    _, H = batch_directions(features, spec, gamma, np.asarray(theta, dtype=float),
                            np.asarray(omega, dtype=float), batch)
    return H[0] if one else H


def vanilla_step(state: LearnerState, obs, alpha: float, beta: float,
                 features: FeatureMap, spec: SoftmaxSpec, gamma: float) -> LearnerState:
    """One simultaneous two-timescale update; both parameters use the pre-step theta."""
    batch, _ = _single(obs)
    G, H = batch_directions(features, spec, gamma, state.theta, state.omega, batch)
    return replace(
        state,
        theta=project(state.theta + alpha * G[0], state.radius),
        omega=project(state.omega + beta * H[0], state.radius),
    )


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha0 / T**a`` and ``beta0 / T**b``.

    In ``constant`` mode the steps are ``alpha0`` and ``beta0``.  By default
    the polynomial steps are indexed by the horizon ``T`` and stay fixed for
    the whole run; with ``decaying=True`` they are indexed by ``t + 1``.
    """

    mode: str
    alpha0: float
    beta0: float
    a: float = 0.5
    b: float = 0.5
    horizon: int = 1
    decaying: bool = False

    def __post_init__(self):
        if self.mode not in ("constant", "polynomial"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError("alpha0 and beta0 must be positive")
        if self.mode == "polynomial":
            if not 0.5 <= self.a <= 1.0:
                raise ValueError(f"exponent a must satisfy 1/2 <= a <= 1, got {self.a}")
            if not 0.0 < self.b <= self.a:
                raise ValueError(f"exponent b must satisfy 0 < b <= a, got {self.b}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def at(self, t: int) -> tuple[float, float]:
        if self.mode == "constant":
            return self.alpha0, self.beta0
        n = t + 1 if self.decaying else self.horizon
        return self.alpha0 / n**self.a, self.beta0 / n**self.b

    @property
    def alpha(self) -> float:
        return self.at(0)[0] if not self.decaying else self.alpha0

    @property
    def beta(self) -> float:
        return self.at(0)[1] if not self.decaying else self.beta0


def make_schedule(mode: str, params: dict, T: int) -> StepSchedule:
    """Build a schedule from ``params`` (keys ``alpha0, beta0`` and optionally ``a, b, decaying``)."""
    return StepSchedule(
        mode=mode,
        alpha0=float(params.get("alpha0", params.get("alpha", 0.1))),
        beta0=float(params.get("beta0", params.get("beta", 0.5))),
        a=float(params.get("a", 0.5)),
        b=float(params.get("b", 0.5)),
        horizon=int(T),
        decaying=bool(params.get("decaying", False)),
    )


@dataclass(frozen=True)
class NestedConfig:
    T: int
    T_c: int
    B: int
    M: int
    alpha: float
    beta: float

    def __post_init__(self):
        if self.T < 1 or self.T_c < 0 or self.B < 1 or self.M < 1:
            raise ValueError("nested-loop sizes must be positive (T_c may be 0)")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("nested-loop step sizes must be positive")

    @property
    def samples_per_iteration(self) -> int:
        return self.B * self.T_c + self.M

    def check_against(self, lambda_min: float, K: float | None = None) -> list[str]:
        """Warnings for step sizes outside the range the convergence bound needs."""
        issues = []
        if self.beta >= lambda_min / 4:
            issues.append(f"beta={self.beta} >= lambda/4={lambda_min / 4:.4g}")
        if K is not None and self.alpha >= 1.0 / K:
            issues.append(f"alpha={self.alpha} >= 1/K={1.0 / K:.4g}")
        return issues
