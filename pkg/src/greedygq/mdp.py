"""Finite MDPs, behavior policies, stationary distributions and samplers."""

from __future__ import annotations

import json
import warnings
from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._rng import make_rng
from .errors import DegenerateChainError
from .features import FeatureMap, random_features

PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with transition tensor ``P[s, a, s']`` and rewards ``r[s, a, s']``."""

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    start_state: int = 0
    layout_tag: str = ""

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if r.shape != P.shape:
            raise ValueError(f"reward shape {r.shape} != transition shape {P.shape}")
        if np.any(P < 0):
            raise ValueError("transition probabilities must be non-negative")
        worst = np.abs(P.sum(axis=2) - 1.0).max()
        if worst > PROB_TOL:
            raise ValueError(f"transition rows must sum to 1 (max deviation {worst:.3g})")
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if not 0 <= self.start_state < P.shape[0]:
            raise ValueError(f"start_state {self.start_state} out of range")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def r_max(self) -> float:
        return float(np.abs(self.reward).max()) if self.reward.size else 0.0

    @cached_property
    def terminal_states(self) -> tuple[int, ...]:
        """States that loop on themselves under every action with zero reward."""
        S = self.n_states
        idx = np.arange(S)
        stay = np.all(self.transition[idx, :, idx] == 1.0, axis=1)
        silent = np.all(self.reward == 0.0, axis=(1, 2))
        return tuple(int(s) for s in np.flatnonzero(stay & silent))

    @cached_property
    def continualized(self) -> "TabularMdp":
        """Copy in which terminal states restart at ``start_state``.

        This turns an episodic task into a continuing one so that the behavior
        chain can be ergodic.  Returns ``self`` when nothing needs rewiring.
        """
        rewire = [s for s in self.terminal_states if s != self.start_state]
        if not rewire:
            return self
        P = self.transition.copy()
        P[rewire] = 0.0
        P[rewire, :, self.start_state] = 1.0
        return TabularMdp(P, self.reward, self.discount, self.start_state, self.layout_tag)

    def expected_reward(self) -> np.ndarray:
        """``E[r | s, a]`` with shape ``(S, A)``."""
        return np.einsum("ijk,ijk->ij", self.transition, self.reward)

    def to_dict(self, features: FeatureMap | None = None) -> dict:
        doc = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.discount,
            "start_state": self.start_state,
            "layout_tag": self.layout_tag,
            "transitions": self.transition.tolist(),
            "rewards": self.reward.tolist(),
        }
        if features is not None:
            doc["features"] = features.table.tolist()
        return doc

    def to_json(self, features: FeatureMap | None = None) -> str:
        return json.dumps(self.to_dict(features))

    @classmethod
    def from_dict(cls, doc: dict) -> tuple["TabularMdp", FeatureMap | None]:
        mdp = cls(
            np.array(doc["transitions"], dtype=float),
            np.array(doc["rewards"], dtype=float),
            float(doc["gamma"]),
            int(doc.get("start_state", 0)),
            str(doc.get("layout_tag", "")),
        )
        if mdp.n_states != doc["n_states"] or mdp.n_actions != doc["n_actions"]:
            raise ValueError("declared n_states/n_actions disagree with the tensors")
        feats = doc.get("features")
        if feats is not None:
            feats = FeatureMap(np.array(feats, dtype=float), mdp.n_states, mdp.n_actions)
        return mdp, feats

    @classmethod
    def from_json(cls, text: str) -> tuple["TabularMdp", FeatureMap | None]:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class BehaviorPolicy:
    """Fixed data-collecting policy ``probs[s, a]``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValueError("behavior policy must be an (S, A) matrix")
        if np.any(p < 0) or np.abs(p.sum(axis=1) - 1.0).max() > PROB_TOL:
            raise ValueError("behavior policy rows must be probability distributions")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)


class Observation(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int


@dataclass(frozen=True)
class ObservationBatch:
    """Column-wise batch of transitions."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, i: int) -> Observation:
        return Observation(int(self.s[i]), int(self.a[i]), float(self.r[i]), int(self.s_next[i]))

    def __iter__(self) -> Iterator[Observation]:
        return (self[i] for i in range(len(self)))

    @classmethod
    def of(cls, observations) -> "ObservationBatch":
        if isinstance(observations, ObservationBatch):
            return observations
        if isinstance(observations, Observation):
            observations = [observations]
        obs = list(observations)
        return cls(
            np.array([o.s for o in obs], dtype=np.intp),
            np.array([o.a for o in obs], dtype=np.intp),
            np.array([o.r for o in obs], dtype=float),
            np.array([o.s_next for o in obs], dtype=np.intp),
        )


# -- constructors -------------------------------------------------------------


def generate_garnet(
    n_states: int,
    n_actions: int,
    branching: int,
    n_features: int,
    seed: int,
    discount: float = 0.95,
) -> tuple[TabularMdp, FeatureMap]:
    """Random Garnet MDP ``G(n_states, n_actions, branching, n_features)``.

    Each state-action pair gets ``branching`` distinct successors with
    normalized U(0,1) weights.  The reward is U(0,1) per state-action pair and
    does not depend on the successor.  Features come from
    :func:`random_features` on an independent stream of the same seed.
    """
    if not 1 <= branching <= n_states:
        raise ValueError(f"branching must lie in [1, n_states={n_states}], got {branching}")
    if n_actions < 1:
        raise ValueError("n_actions must be positive")
    if n_features >= n_states * n_actions:
        warnings.warn(
            f"n_features={n_features} >= |S||A|={n_states * n_actions}: "
            "the linear approximation is exact",
            stacklevel=2,
        )
    rng = make_rng(seed, "garnet")
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            succ = rng.choice(n_states, size=branching, replace=False)
            w = 1.0 - rng.random(branching)  # (0, 1], so every successor keeps mass
            P[s, a, succ] = w / w.sum()
    r_sa = rng.random((n_states, n_actions))
    R = np.repeat(r_sa[:, :, None], n_states, axis=2)
    tag = f"garnet({n_states},{n_actions},{branching},{n_features};seed={seed})"
    mdp = TabularMdp(P, R, discount, 0, tag)
    return mdp, random_features(n_features, n_states, n_actions, seed)


FROZEN_LAKE_MAP = ("SFFF", "FHFH", "FFFH", "HFFG")
# Action order follows the common gym convention.
LEFT, DOWN, RIGHT, UP = range(4)
_MOVES = {LEFT: (0, -1), DOWN: (1, 0), RIGHT: (0, 1), UP: (-1, 0)}


def frozen_lake(slippery: bool = False, discount: float = 0.95) -> TabularMdp:
    """4x4 Frozen Lake with absorbing holes and goal.

    Actions are ``LEFT, DOWN, RIGHT, UP`` = 0..3.  Entering the goal pays 1.
    With ``slippery`` the intended move and both perpendicular moves each get
    probability 1/3.
    """
    rows, cols = len(FROZEN_LAKE_MAP), len(FROZEN_LAKE_MAP[0])
    S, A = rows * cols, 4
    P = np.zeros((S, A, S))
    R = np.zeros((S, A, S))

    def step(s, a):
        i, j = divmod(s, cols)
        di, dj = _MOVES[a]
        i = min(max(i + di, 0), rows - 1)
        j = min(max(j + dj, 0), cols - 1)
        return i * cols + j

    for s in range(S):
        cell = FROZEN_LAKE_MAP[s // cols][s % cols]
        for a in range(A):
            if cell in "HG":
                P[s, a, s] = 1.0
                continue
            outcomes = [(a - 1) % 4, a, (a + 1) % 4] if slippery else [a]
            for move in outcomes:
                s2 = step(s, move)
                P[s, a, s2] += 1.0 / len(outcomes)
                if FROZEN_LAKE_MAP[s2 // cols][s2 % cols] == "G":
                    R[s, a, s2] = 1.0
    tag = "frozenlake4x4" + ("-slippery" if slippery else "")
    return TabularMdp(P, R, discount, 0, tag)


def uniform_behavior(mdp: TabularMdp) -> BehaviorPolicy:
    return BehaviorPolicy(np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))


# -- behavior chain -------------------------------------------------------------


def state_chain(mdp: TabularMdp, policy: BehaviorPolicy) -> np.ndarray:
    """State transition matrix of the restart-continualized chain under ``policy``."""
    P = mdp.continualized.transition
    return np.einsum("sa,sat->st", policy.probs, P)


def state_distribution(mdp: TabularMdp, policy: BehaviorPolicy) -> np.ndarray:
    """Stationary state distribution ``nu`` of the behavior chain."""
    P_pi = state_chain(mdp, policy)
    n = P_pi.shape[0]
    n_comp, labels = connected_components(P_pi > 0, directed=True, connection="strong")
    if n_comp > 1:
        home = labels[mdp.start_state]
        cut = tuple(int(s) for s in np.flatnonzero(labels != home))
        raise DegenerateChainError(
            f"behavior chain is reducible: states {list(cut)} are not mutually "
            f"reachable with start state {mdp.start_state}",
            cut,
        )
    system = np.vstack([P_pi.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    nu = np.linalg.lstsq(system, rhs, rcond=None)[0]
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


def stationary_distribution(mdp: TabularMdp, policy: BehaviorPolicy) -> np.ndarray:
    """Stationary state-action distribution ``mu[s, a] = nu[s] * pi_b(a|s)``."""
    return state_distribution(mdp, policy)[:, None] * policy.probs


def mixing_probe(
    mdp: TabularMdp, policy: BehaviorPolicy, horizon: int, nu: np.ndarray | None = None
) -> np.ndarray:
    """Worst-start total-variation distance to stationarity.

    Returns ``d`` of length ``horizon + 1`` with
    ``d[t] = max_s0 TV(P^t(. | s0), nu)``; ``d[0]`` is the distance of the
    point masses themselves.
    """
    P_pi = state_chain(mdp, policy)
    if nu is None:
        nu = state_distribution(mdp, policy)
    dist = np.eye(P_pi.shape[0])
    out = np.empty(horizon + 1)
    for t in range(horizon + 1):
        out[t] = 0.5 * np.abs(dist - nu).sum(axis=1).max()
        dist = dist @ P_pi
    return out


# -- samplers -------------------------------------------------------------------


class _Sampler:
    """Shared plumbing: an owned generator and cumulative tables for inversion."""

    def __init__(self, mdp: TabularMdp, policy: BehaviorPolicy, seed: int, stream: str):
        self.mdp = mdp.continualized
        self.policy = policy
        self.rng = make_rng(seed, stream)
        self.consumed = 0
        self._cum_P = np.cumsum(self.mdp.transition, axis=2)
        self._reward = self.mdp.reward

    def draw(self, n: int) -> ObservationBatch:
        raise NotImplementedError

    def __iter__(self) -> Iterator[Observation]:
        while True:
            yield from self.draw(256)

    def _next_states(self, s: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
        cum = self._cum_P[s, a]
        idx = (cum <= u[:, None]).sum(axis=1)
        return np.minimum(idx, self.mdp.n_states - 1)


class IidSampler(_Sampler):
    """Independent draws ``(s, a) ~ mu``, ``s' ~ P(. | s, a)``."""

    def __init__(self, mdp, policy, seed, mu: np.ndarray | None = None, stream: str = "iid-sampler"):
        super().__init__(mdp, policy, seed, stream)
        if mu is None:
            mu = stationary_distribution(mdp, policy)
        self._cum_mu = np.cumsum(np.asarray(mu).ravel())

    def draw(self, n: int) -> ObservationBatch:
        u = self.rng.random((n, 2))
        sa = np.minimum(np.searchsorted(self._cum_mu, u[:, 0], side="right"), self._cum_mu.size - 1)
        s, a = np.divmod(sa, self.mdp.n_actions)
        s2 = self._next_states(s, a, u[:, 1])
        self.consumed += n
        return ObservationBatch(s, a, self._reward[s, a, s2], s2)


class MarkovSampler(_Sampler):
    """Single trajectory following the behavior policy.

    The first state is drawn from the stationary distribution unless
    ``start_state`` is given.
    """

    def __init__(self, mdp, policy, seed, start_state: int | None = None, nu=None):
        super().__init__(mdp, policy, seed, "markov-sampler")
        if start_state is None:
            if nu is None:
                nu = state_distribution(mdp, policy)
            u0 = self.rng.random()
            start_state = min(bisect_right(np.cumsum(nu).tolist(), u0), len(nu) - 1)
        self.state = int(start_state)
        self._cum_pi = [row.tolist() for row in np.cumsum(policy.probs, axis=1)]
        self._cum_P_list = [[row.tolist() for row in rows] for rows in self._cum_P]

    def draw(self, n: int) -> ObservationBatch:
        u = self.rng.random((n, 2)).tolist()
        n_a, n_s = self.mdp.n_actions, self.mdp.n_states
        s_out = np.empty(n, dtype=np.intp)
        a_out = np.empty(n, dtype=np.intp)
        s2_out = np.empty(n, dtype=np.intp)
        s = self.state
        for i, (ua, us) in enumerate(u):
            a = min(bisect_right(self._cum_pi[s], ua), n_a - 1)
            s2 = min(bisect_right(self._cum_P_list[s][a], us), n_s - 1)
            s_out[i], a_out[i], s2_out[i] = s, a, s2
            s = s2
        self.state = s
        self.consumed += n
        return ObservationBatch(s_out, a_out, self._reward[s_out, a_out, s2_out], s2_out)


def markov_sampler(mdp, policy, seed, start_state=None) -> MarkovSampler:
    return MarkovSampler(mdp, policy, seed, start_state)


def iid_sampler(mdp, policy, seed) -> IidSampler:
    return IidSampler(mdp, policy, seed)


def make_sampler(kind: str, mdp, policy, seed, **kwargs) -> _Sampler:
    if kind == "iid":
        return IidSampler(mdp, policy, seed, **kwargs)
    if kind == "markov":
        return MarkovSampler(mdp, policy, seed, **kwargs)
    raise ValueError(f"unknown sampler kind {kind!r}; expected 'iid' or 'markov'")
