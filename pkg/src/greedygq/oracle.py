"""Exact MSPBE quantities on small MDPs.

Everything here is an expectation under the stationary behavior distribution,
computed by enumerating ``(s, a, s')``.  These are the measuring instruments
of the experiments: they observe the learners, they never drive them.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .errors import AssumptionViolated, DegenerateChainError
from .features import NORM_SLACK, FeatureMap
from .mdp import BehaviorPolicy, TabularMdp, mixing_probe, stationary_distribution
from .policy import SoftmaxSpec, softmax_parts

LAMBDA_MIN = 1e-10


class ExactModel:
    """Stationary distribution, feature covariance and the MSPBE machinery.

    Attributes
    ----------
    mu : ndarray, shape (S, A)
        Stationary state-action distribution of the behavior policy.
    C : ndarray, shape (N, N)
        ``E_mu[phi phi^T]``.
    lambda_min : float
        Smallest eigenvalue of ``C``.
    """

    def __init__(self, mdp: TabularMdp, policy: BehaviorPolicy, features: FeatureMap,
                 policy_spec: SoftmaxSpec | None = None, mu: np.ndarray | None = None):
        self.mdp = mdp.continualized
        self.policy = policy
        self.features = features
        self.spec = policy_spec or SoftmaxSpec()
        self.gamma = mdp.discount
        self.mu = stationary_distribution(mdp, policy) if mu is None else np.asarray(mu)
        S, A = self.mu.shape
        self._Phi = features.table.T  # (SA, N)
        self._mu = self.mu.ravel()
        self._P = self.mdp.transition.reshape(S * A, S)
        self._rbar = self.mdp.expected_reward().ravel()
        self._muPhi = self._mu[:, None] * self._Phi
        C = self._Phi.T @ self._muPhi
        self.C = 0.5 * (C + C.T)
        self.lambda_min = float(eigh(self.C, eigvals_only=True)[0])
        if self.lambda_min <= LAMBDA_MIN:
            raise AssumptionViolated(
                f"feature covariance is singular: smallest eigenvalue {self.lambda_min:.3e}"
                f" <= {LAMBDA_MIN:g}"
            )
        self._chol = cho_factor(self.C)

    @property
    def n_features(self) -> int:
        return self._Phi.shape[1]

    def _state_terms(self, theta):
        _, _, v, phihat = softmax_parts(self.spec.sigma, self.features.phi, theta)
        return v, phihat

    def _td_from(self, theta, v) -> np.ndarray:
        e_delta = self._rbar + self.gamma * (self._P @ v) - self._Phi @ theta
        return self._muPhi.T @ e_delta

    def _cross_from(self, phihat) -> np.ndarray:
        return (self._P @ phihat).T @ self._muPhi

    def expected_td(self, theta) -> np.ndarray:
        """``E[delta | s, a]`` for every pair, flattened to length ``S*A``."""
        theta = np.asarray(theta, dtype=float)
        v, _ = self._state_terms(theta)
        return self._rbar + self.gamma * (self._P @ v) - self._Phi @ theta

    def td_vector(self, theta) -> np.ndarray:
        """``E_mu[delta phi]``."""
        theta = np.asarray(theta, dtype=float)
        return self._td_from(theta, self._state_terms(theta)[0])

    def cross_moment(self, theta) -> np.ndarray:
        """``E_mu[phihat_{S'} phi_{S,A}^T]`` as an ``(N, N)`` matrix."""
        return self._cross_from(self._state_terms(np.asarray(theta, dtype=float))[1])

    def evaluate(self, theta):
        """``(grad J, omega_star)`` sharing one pass over the states."""
        theta = np.asarray(theta, dtype=float)
        v, phihat = self._state_terms(theta)
        td = self._td_from(theta, v)
        w = self.solve(td)
        return 2.0 * (self.gamma * self._cross_from(phihat) @ w - td), w

    def solve(self, b) -> np.ndarray:
        return cho_solve(self._chol, b)

    def omega_star(self, theta) -> np.ndarray:
        return self.solve(self.td_vector(theta))

    def objective(self, theta) -> float:
        v = self.td_vector(theta)
        return float(max(v @ self.solve(v), 0.0))

    def gradient(self, theta) -> np.ndarray:
        """Gradient of the MSPBE (not of half of it)."""
        return self.evaluate(theta)[0]

    def tracking_error(self, theta, omega) -> float:
        return float(np.linalg.norm(np.asarray(omega) - self.omega_star(theta)))

    def expected_h(self, theta, omega) -> np.ndarray:
        """``E_mu[H(theta, omega)] = E[delta phi] - C omega``."""
        return self.td_vector(theta) - self.C @ np.asarray(omega, dtype=float)

    def expected_g(self, theta, omega) -> np.ndarray:
        """``E_mu[G(theta, omega)]`` by enumeration over ``(s, a, s')``."""
        theta = np.asarray(theta, dtype=float)
        return self.td_vector(theta) - self.gamma * self.cross_moment(theta) @ np.asarray(omega, dtype=float)

    def transition_weights(self) -> np.ndarray:
        """Exact probabilities of every ``(s, a, s')`` tuple, shape ``(S, A, S)``."""
        return self.mu[:, :, None] * self.mdp.transition


def build_exact_model(mdp, policy, features, policy_spec: SoftmaxSpec | None = None) -> ExactModel:
    return ExactModel(mdp, policy, features, policy_spec)


def expected_td_vector(model: ExactModel, theta) -> np.ndarray:
    return model.td_vector(theta)


def omega_star(model: ExactModel, theta) -> np.ndarray:
    return model.omega_star(theta)


def objective_j(model: ExactModel, theta) -> float:
    return model.objective(theta)


def grad_j(model: ExactModel, theta) -> np.ndarray:
    return model.gradient(theta)


def tracking_error(model: ExactModel, theta, omega) -> float:
    return model.tracking_error(theta, omega)


@dataclass
class AssumptionReport:
    lambda_min: float
    max_feature_norm: float
    k1: float
    k2: float
    mixing_rate: float
    solvable: bool
    bounded_features: bool
    smooth_policy: bool
    ergodic: bool
    notes: list[str]

    @property
    def all_pass(self) -> bool:
        return self.solvable and self.bounded_features and self.smooth_policy and self.ergodic

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_pass"] = self.all_pass
        return d


def fit_mixing_rate(d: np.ndarray, floor: float = 1e-13) -> float:
    """Geometric decay rate from a least-squares fit of ``log d(t)``, t >= 1."""
    t = np.arange(len(d))[1:]
    y = np.asarray(d)[1:]
    keep = y > floor
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(t[keep], np.log(y[keep]), 1)[0]
    return float(np.exp(slope))


def validate_assumptions(mdp: TabularMdp, policy: BehaviorPolicy, features: FeatureMap,
                         sigma: float = 1.0, horizon: int = 50) -> AssumptionReport:
    """Check the four standing assumptions; never raises on failure."""
    notes = []
    max_norm = features.max_norm()
    try:
        mu = stationary_distribution(mdp, policy)
        d = mixing_probe(mdp, policy, horizon, nu=mu.sum(axis=1))
        rho = fit_mixing_rate(d)
        ergodic = bool(rho < 1.0)
    except DegenerateChainError as exc:
        notes.append(str(exc))
        mu = np.full((mdp.n_states, mdp.n_actions), 1.0 / (mdp.n_states * mdp.n_actions))
        rho, ergodic = float("nan"), False
    Phi = features.table.T
    C = Phi.T @ (mu.ravel()[:, None] * Phi)
    lam = float(eigh(0.5 * (C + C.T), eigvals_only=True)[0])
    if lam <= LAMBDA_MIN:
        notes.append(f"C is singular (smallest eigenvalue {lam:.3e})")
    return AssumptionReport(
        lambda_min=lam,
        max_feature_norm=float(max_norm),
        k1=2.0 * sigma,
        k2=8.0 * sigma**2,
        mixing_rate=rho,
        solvable=bool(lam > LAMBDA_MIN),
        bounded_features=bool(max_norm <= 1.0 + NORM_SLACK),
        smooth_policy=bool(sigma > 0 and np.isfinite(sigma)),
        ergodic=ergodic,
        notes=notes,
    )
