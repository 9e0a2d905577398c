"""Softmax target policy, expected next-state value and its gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureMap


@dataclass(frozen=True)
class SoftmaxSpec:
    """Inverse temperature ``sigma`` of the softmax over linear Q-values."""

    sigma: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ValueError(f"sigma must be a positive finite number, got {self.sigma}")


def softmax_parts(sigma: float, phi_s: np.ndarray, theta: np.ndarray):
    """Policy, Q-values, expected value and its gradient at one or many states.

    ``phi_s`` has shape ``(..., A, N)``.  Returns ``(pi, q, vbar, phihat)`` with
    shapes ``(..., A)``, ``(..., A)``, ``(...)`` and ``(..., N)``.
    """
    q = phi_s @ theta
    logits = sigma * q
    logits = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    pi = w / w.sum(axis=-1, keepdims=True)
    vbar = (pi * q).sum(axis=-1)
    phibar = np.matmul(pi[..., None, :], phi_s)[..., 0, :]
    weighted = np.matmul((pi * q)[..., None, :], phi_s)[..., 0, :]
    # grad pi_a = sigma * pi_a * (phi_a - phibar), folded into one contraction
    phihat = phibar + sigma * (weighted - vbar[..., None] * phibar)
    return pi, q, vbar, phihat


def target_policy(spec: SoftmaxSpec, features: FeatureMap, theta, s) -> np.ndarray:
    """``pi_theta(. | s)``; ``s`` may be an int or an array of states."""
    return softmax_parts(spec.sigma, features.phi[s], np.asarray(theta, dtype=float))[0]


def vbar(spec: SoftmaxSpec, features: FeatureMap, theta, s):
    """Expected Q-value of the target policy at state ``s``."""
    v = softmax_parts(spec.sigma, features.phi[s], np.asarray(theta, dtype=float))[2]
    return float(v) if np.ndim(v) == 0 else v


def grad_vbar(spec: SoftmaxSpec, features: FeatureMap, theta, s) -> np.ndarray:
    """Gradient of :func:`vbar` with respect to ``theta``."""
    return softmax_parts(spec.sigma, features.phi[s], np.asarray(theta, dtype=float))[3]


def policy_jacobian(spec: SoftmaxSpec, features: FeatureMap, theta, s) -> np.ndarray:
    """Rows ``grad pi_theta(a | s)`` for every action, shape ``(A, N)``."""
    phi_s = features.phi[s]
    pi = target_policy(spec, features, theta, s)
    phibar = pi @ phi_s
    return spec.sigma * pi[:, None] * (phi_s - phibar)


@dataclass(frozen=True)
class LipschitzConstants:
    k1: float
    k2: float
    K: float
    k3: float
    w_star_lip: float


def lipschitz_constants(spec: SoftmaxSpec, mdp, features: FeatureMap, radius: float, lam: float) -> LipschitzConstants:
    """Smoothness constants of the softmax class and of the MSPBE on the ``radius`` ball.

    ``lam`` is the smallest eigenvalue of the feature covariance.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    g, R, A = mdp.discount, float(radius), mdp.n_actions
    r_max = mdp.r_max
    k1 = 2.0 * spec.sigma
    k2 = 8.0 * spec.sigma**2
    phihat_bound = A * R * k1 + 1.0
    td_lip = 1.0 + g + g * R * A * k1
    reward_span = r_max + R + g * R
    K = 2.0 * g / lam * (phihat_bound * td_lip + A * reward_span * (2.0 * k1 + k2 * R))
    k3 = (
        td_lip
        + g / lam * A * (2.0 * k1 + k2 * R) * reward_span
        + g / lam * phihat_bound * td_lip
    )
    return LipschitzConstants(k1=k1, k2=k2, K=K, k3=k3, w_star_lip=td_lip / lam)
