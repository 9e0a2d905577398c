"""Linear features over state-action pairs and linear Q-values."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng

# Loaded matrices may exceed unit column norm by this much (round-off from text).
NORM_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature matrix with one column ``phi[s, a]`` per state-action pair.

    ``table`` has shape ``(n_features, n_states * n_actions)``; column
    ``s * n_actions + a`` holds the feature vector of ``(s, a)``.
    """

    table: np.ndarray
    n_states: int
    n_actions: int

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.ndim != 2 or table.shape[1] != self.n_states * self.n_actions:
            raise ValueError(
                f"feature table must have shape (N, {self.n_states * self.n_actions}),"
                f" got {table.shape}"
            )
        if not np.all(np.isfinite(table)):
            raise ValueError("feature table contains non-finite entries")
        norms = np.linalg.norm(table, axis=0)
        worst = int(np.argmax(norms))
        if norms[worst] > 1.0 + NORM_SLACK:
            s, a = divmod(worst, self.n_actions)
            raise ValueError(
                f"feature column for (s={s}, a={a}) has norm {norms[worst]:.12g} > 1"
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        phi = table.T.reshape(self.n_states, self.n_actions, -1)
        object.__setattr__(self, "_phi", phi)

    @property
    def n_features(self) -> int:
        return self.table.shape[0]

    @property
    def phi(self) -> np.ndarray:
        """Read-only view of shape ``(n_states, n_actions, n_features)``."""
        return self._phi

    def column(self, s: int, a: int) -> np.ndarray:
        return self._phi[s, a]

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.table, axis=0).max())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.table:
            writer.writerow(repr(float(x)) for x in row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_states: int, n_actions: int) -> "FeatureMap":
        rows = [[float(x) for x in row] for row in csv.reader(io.StringIO(text)) if row]
        return cls(np.array(rows), n_states, n_actions)


def random_features(n_features: int, n_states: int, n_actions: int, seed: int) -> FeatureMap:
    """Gaussian random features with every column rescaled to unit norm."""
    if n_features < 1:
        raise ValueError(f"n_features must be >= 1, got {n_features}")
    rng = make_rng(seed, "features")
    table = rng.standard_normal((n_features, n_states * n_actions))
    table /= np.linalg.norm(table, axis=0, keepdims=True)
    return FeatureMap(table, n_states, n_actions)


def q_value(features: FeatureMap, theta: np.ndarray, s: int, a: int) -> float:
    """Linear action value ``phi[s, a] . theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (features.n_features,):
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({features.n_features},)"
        )
    return float(features.column(s, a) @ theta)
