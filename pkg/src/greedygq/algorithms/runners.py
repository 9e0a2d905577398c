"""Vanilla, nested-loop and mini-batch Greedy-GQ drivers.

All three share the same conventions: the run seed names independent streams
for the sampler (``"iid-sampler"`` / ``"markov-sampler"``), the random stopping
index (``"stop"``) and the Monte-Carlo probes of the evaluator (``"mc"``).  The
evaluator observes the iterate at every ``eval_every``-th iteration and at the
last one; it never feeds back into the updates.
"""

from __future__ import annotations

import logging

import numpy as np

from .._rng import make_rng
from ..mdp import make_sampler
from ..oracle import ExactModel
from ..policy import SoftmaxSpec
from ..harness import metrics as _metrics  # module import: metrics depends on updates
from .updates import LearnerState, NestedConfig, StepSchedule, batch_directions, project

log = logging.getLogger(__name__)


def draw_stop_index(seed: int, T: int) -> int:
    """Random stopping index ``W ~ Uniform{0, ..., T-1}``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return int(make_rng(seed, "stop").integers(0, T))


class _Run:
    def __init__(self, mdp, policy, features, sampler_kind, radius, seed, eval_every,
                 spec, model, n_mc, theta0, omega0, final, T):
        self.features = features
        self.spec = spec or SoftmaxSpec()
        self.gamma = mdp.discount
        self.sampler = make_sampler(sampler_kind, mdp, policy, seed)
        n = features.n_features
        theta = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
        omega = np.zeros(n) if omega0 is None else np.asarray(omega0, dtype=float)
        self.state = LearnerState(project(theta, radius), project(omega, radius), radius)
        W = draw_stop_index(seed, T)
        self.n_iter = T if final else W
        self.trace = _metrics.MetricsTrace(meta={"stop_index": W, "final": bool(final), "T": T,
                                        "seed": seed, "sampler": sampler_kind})
        self.eval_every = eval_every
        self.evaluator = None
        if eval_every:
            if model is None:
                model = ExactModel(mdp, policy, features, self.spec)
            self.evaluator = _metrics.Evaluator(model, seed, n_mc)

    def observe(self, t: int, batch_size: int, omega=None):
        if self.evaluator is None:
            return
        if t % self.eval_every and t != self.n_iter:
            return
        if self.trace.rows and self.trace.rows[-1].iter == t:
            return
        st = self.state
        self.evaluator.record(self.trace, self.sampler.consumed, t, st.theta,
                              st.omega if omega is None else omega, batch_size)

    def directions(self, theta, omega, n):
        return batch_directions(self.features, self.spec, self.gamma, theta, omega, self.sampler.draw(n))

    def finish(self):
        self.trace.meta["samples_consumed"] = self.sampler.consumed
        self.trace.meta["iterations"] = self.n_iter
        return self.state.theta, self.trace


def run_vanilla(mdp, policy, features, schedule: StepSchedule, sampler_kind: str = "iid",
                T: int | None = None, radius: float = 100.0, seed: int = 0,
                eval_every: int | None = None, *, spec: SoftmaxSpec | None = None,
                model: ExactModel | None = None, n_mc: int = 100, final: bool = False,
                theta0=None, omega0=None):
    """Two-timescale Greedy-GQ with one sample per iteration.

    Runs ``W`` iterations (``T`` with ``final=True``) and returns
    ``(theta, trace)``.
    """
    T = schedule.horizon if T is None else T
    run = _Run(mdp, policy, features, sampler_kind, radius, seed, eval_every,
               spec, model, n_mc, theta0, omega0, final, T)
    for t in range(run.n_iter):
        run.observe(t, 1)
        alpha, beta = schedule.at(t)
        st = run.state
        G, H = run.directions(st.theta, st.omega, 1)
        run.state = LearnerState(project(st.theta + alpha * G[0], radius),
                                 project(st.omega + beta * H[0], radius), radius)
    run.observe(run.n_iter, 1)
    return run.finish()


def run_minibatch(mdp, policy, features, T: int, B: int, alpha: float, beta: float,
                  sampler_kind: str = "iid", radius: float = 100.0, seed: int = 0,
                  eval_every: int | None = None, *, spec: SoftmaxSpec | None = None,
                  model: ExactModel | None = None, n_mc: int = 100, final: bool = False,
                  schedule: StepSchedule | None = None, theta0=None, omega0=None):
    """Both parameters updated from the mean direction over one fresh batch of ``B`` samples."""
    if B < 1:
        raise ValueError("batch size B must be >= 1")
    run = _Run(mdp, policy, features, sampler_kind, radius, seed, eval_every,
               spec, model, n_mc, theta0, omega0, final, T)
    for t in range(run.n_iter):
        run.observe(t, B)
        if schedule is not None:
            alpha, beta = schedule.at(t)
        st = run.state
        G, H = run.directions(st.theta, st.omega, B)
        run.state = LearnerState(project(st.theta + alpha / B * G.sum(axis=0), radius),
                                 project(st.omega + beta / B * H.sum(axis=0), radius), radius)
    run.observe(run.n_iter, B)
    return run.finish()


def run_nested_loop(mdp, policy, features, config: NestedConfig, sampler_kind: str = "iid",
                    radius: float = 100.0, seed: int = 0, eval_every: int | None = None, *,
                    spec: SoftmaxSpec | None = None, model: ExactModel | None = None,
                    n_mc: int = 100, final: bool = False, theta0=None, omega0=None):
    """Inner loop refines omega at frozen theta; outer loop steps theta with the stale omega.

    Each outer step consumes ``B * T_c`` samples for the inner loop and then
    ``M`` fresh samples for the theta step, which uses the omega held when the
    outer step began.  The next outer step starts from the last inner iterate.
    """
    cfg = config
    run = _Run(mdp, policy, features, sampler_kind, radius, seed, eval_every,
               spec, model, n_mc, theta0, omega0, final, cfg.T)
    if model is not None:
        issues = cfg.check_against(model.lambda_min)
        if issues:
            log.info("nested-loop steps outside the analysed range: %s", "; ".join(issues))
    for t in range(run.n_iter):
        run.observe(t, cfg.M)
        theta, w_t = run.state.theta, run.state.omega
        w = w_t
        for _ in range(cfg.T_c):
            _, H = run.directions(theta, w, cfg.B)
            w = project(w + cfg.beta / cfg.B * H.sum(axis=0), radius)
        G, _ = run.directions(theta, w_t, cfg.M)
        run.state = LearnerState(project(theta + cfg.alpha / cfg.M * G.sum(axis=0), radius), w, radius)
    run.observe(run.n_iter, cfg.M)
    return run.finish()


def inner_loop(mdp, policy, features, theta, T_c: int, B: int, beta: float, *,
               sampler_kind: str = "iid", radius: float = 100.0, seed: int = 0,
               spec: SoftmaxSpec | None = None, omega0=None) -> np.ndarray:
    """Only the fast-timescale loop of the nested algorithm, at a frozen ``theta``."""
    spec = spec or SoftmaxSpec()
    sampler = make_sampler(sampler_kind, mdp, policy, seed)
    theta = np.asarray(theta, dtype=float)
    w = np.zeros(features.n_features) if omega0 is None else np.asarray(omega0, dtype=float)
    for _ in range(T_c):
        _, H = batch_directions(features, spec, mdp.discount, theta, w, sampler.draw(B))
        w = project(w + beta / B * H.sum(axis=0), radius)
    return w
