"""Robust LSVI over a finite, enumerable class of Q-value tables.

Members are either step-independent ``(S, A)`` tables, in which case the
regression data pools every step of past episodes, or step-indexed
``(H, S, A)`` tables regressed on the data of their own step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import (EpisodeLog, ParameterError, PolicyTable, TabularMdp, exact_optimal_values,
                  make_rng, sample_episode)


@dataclass(frozen=True)
class FiniteFunctionClass:
    members: np.ndarray  # (M, S, A) or (M, H, S, A)

    def __post_init__(self):
        m = np.asarray(self.members, dtype=float)
        if m.ndim not in (3, 4) or m.shape[0] < 1:
            raise ParameterError("function class needs shape (M, S, A) or (M, H, S, A), M >= 1")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @property
    def M(self) -> int:
        return self.members.shape[0]

    @property
    def stationary(self) -> bool:
        return self.members.ndim == 3

    def at_step(self, h: int) -> np.ndarray:
        """Member tables used at step ``h``, shape (M, S, A)."""
        return self.members if self.stationary else self.members[:, h]

    def check_range(self, H: int) -> None:
        if self.members.min() < 0 or self.members.max() > H + 1:
            raise ParameterError("class values must lie in [0, H + 1]")


@dataclass
class GeneralLsviConfig:
    K: int
    H: int
    zeta: float = 0.0
    delta: float = 0.05
    c_prime: float = 1.0
    cover_T: float | None = None  # defaults to K * H
    log_w: float = 0.0
    subsample: bool = False
    oversample: float = 50.0

    def __post_init__(self):
        if self.K < 1 or self.H < 1:
            raise ParameterError("K and H must be >= 1")
        if self.cover_T is None:
            self.cover_T = float(self.K * self.H)
        if self.c_prime <= 0:
            raise ParameterError("c_prime must be positive")
        if self.cover_T < 1:
            raise ParameterError("cover_T must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError("delta must lie in (0, 1)")


@dataclass
class RegressionData:
    """Dataset {(s, a, q)} stored as per-(s,a) sufficient statistics.

    ``weights`` are visit counts (possibly importance-weighted); ``target_sum``
    and ``target_sq`` are weighted sums of q and q**2.
    """

    weights: np.ndarray  # (S, A)
    target_sum: np.ndarray
    target_sq: np.ndarray

    @classmethod
    def from_points(cls, S: int, A: int, points) -> "RegressionData":
        w = np.zeros((S, A))
        t1 = np.zeros((S, A))
        t2 = np.zeros((S, A))
        for s, a, q in points:
            w[s, a] += 1
            t1[s, a] += q
            t2[s, a] += q * q
        return cls(w, t1, t2)


def squared_losses(tables: np.ndarray, data: RegressionData) -> np.ndarray:
    """sum over the dataset of (f(s,a) - q)^2 for each table."""
    return ((tables ** 2 * data.weights).sum(axis=(1, 2))
            - 2.0 * (tables * data.target_sum).sum(axis=(1, 2))
            + data.target_sq.sum())


def empirical_minimizer(F: FiniteFunctionClass, data: RegressionData, h: int = 0) -> int:
    if F.M == 0:
        raise ParameterError("empty function class")
    losses = squared_losses(F.at_step(h), data)
    best = losses.min()
    # exact ties go to the lowest id; also absorb rounding from the expansion
    scale = max(1.0, abs(best))
    return int(np.flatnonzero(losses <= best + 1e-12 * scale)[0])


def radius_beta_general(k: int, cfg: GeneralLsviConfig, M: int) -> float:
    """C' sqrt(k H zeta^2 + H^2 (log(4T^2/delta) + 2 log M + log|W| + 1))."""
    if k < 1:
        raise ParameterError("episode index k starts at 1")
    if M < 1:
        raise ParameterError("class size must be >= 1")
    arg = 4.0 * cfg.cover_T ** 2 / cfg.delta
    if arg <= 0:
        raise ParameterError("log argument must be positive")
    H = cfg.H
    inner = k * H * cfg.zeta ** 2 + H ** 2 * (np.log(arg) + 2.0 * np.log(M) + cfg.log_w + 1.0)
    if inner < 0:
        raise ParameterError("radius is undefined for these log terms")
    return float(cfg.c_prime * np.sqrt(inner))


def set_sq_norms(tables: np.ndarray, center: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """||f - center||_Z^2 for each table, Z given as (weighted) visit counts."""
    return (((tables - center) ** 2) * weights).sum(axis=(1, 2))


@dataclass
class ConfidenceRegion:
    center: int
    radius: float
    weights: np.ndarray  # the state-action multiset Z as (weighted) counts
    member_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def confidence_region(F: FiniteFunctionClass, center: int, radius: float,
                      weights: np.ndarray, h: int = 0) -> ConfidenceRegion:
    tables = F.at_step(h)
    sq = set_sq_norms(tables, tables[center], weights)
    ids = np.flatnonzero(sq <= radius ** 2)
    if center not in ids:  # rounding cannot remove the center; keep it explicit
        ids = np.union1d(ids, [center])
    return ConfidenceRegion(center=center, radius=radius, weights=weights, member_ids=ids)


def width_bonus(region: ConfidenceRegion, F: FiniteFunctionClass, s=None, a=None,
                h: int = 0):
    """max minus min over the region; a full (S, A) table when s, a are None."""
    vals = F.at_step(h)[region.member_ids]
    width = vals.max(axis=0) - vals.min(axis=0)
    if s is None:
        return width
    return float(width[s, a])


def sensitivities(F: FiniteFunctionClass, weights: np.ndarray, h: int = 0) -> np.ndarray:
    """Per-point sensitivity max_{f1,f2} (f1-f2)^2(z) / max(||f1-f2||_Z^2, 1)."""
    tables = F.at_step(h)
    M = tables.shape[0]
    sens = np.zeros(tables.shape[1:])
    for i in range(M):
        diff2 = (tables[i + 1:] - tables[i]) ** 2
        if diff2.shape[0] == 0:
            continue
        norms = np.maximum((diff2 * weights).sum(axis=(1, 2)), 1.0)
        sens = np.maximum(sens, (diff2 / norms[:, None, None]).max(axis=0))
    return sens


def sensitivity_sample(F: FiniteFunctionClass, center: int, weights: np.ndarray,
                       delta: float, subsample: bool = False, rng=None,
                       oversample: float = 50.0, h: int = 0):
    """Return ``(center, weighted Z)``.

    Off: identity. On: every point is kept with probability
    ``min(1, oversample * sensitivity)`` and reweighted by its inverse.
    """
    if not subsample:
        return center, weights
    if rng is None:
        rng = make_rng(0)
    sens = sensitivities(F, weights, h)
    p = np.minimum(1.0, oversample * sens)
    counts = np.rint(weights).astype(np.int64)
    kept = rng.binomial(counts, p)
    out = np.where(p > 0, kept / np.where(p > 0, p, 1.0), 0.0)
    return center, out


def backward_pass_general(k: int, trajectories: list[EpisodeLog], F: FiniteFunctionClass,
                          cfg: GeneralLsviConfig, s_init: int = 0, rng=None,
                          stats: dict | None = None):
    """Optimistic Q tables from a list of past trajectories.

    ``stats`` may hold precomputed visit counts (see :class:`GeneralLsviAgent`).
    """
    H = cfg.H
    S, A = F.at_step(0).shape[1:]
    if stats is None:
        stats = _trajectory_stats(trajectories, H, S, A)
    counts, rsums = stats["counts"], stats["reward_sums"]  # per step
    beta = radius_beta_general(k, cfg, F.M)
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    if F.stationary:
        pooled_counts = counts.sum(axis=0)
        pooled_r = rsums.sum(axis=0)
    regions = []
    for h in range(H - 1, -1, -1):
        c = pooled_counts if F.stationary else counts[h]
        rs = pooled_r if F.stationary else rsums[h]
        n_sa = c.sum(axis=-1)
        v = V[h + 1]
        # rewards are deterministic per (s, a), so the mean reward is exact
        r_mean = np.divide(rs, n_sa, out=np.zeros_like(rs), where=n_sa > 0)
        t1 = rs + c @ v
        t2 = (c * (r_mean[..., None] + v[None, None, :]) ** 2).sum(axis=-1)
        data = RegressionData(n_sa.astype(float), t1, t2)
        center = empirical_minimizer(F, data, h)
        center, z = sensitivity_sample(F, center, n_sa.astype(float), cfg.delta,
                                       cfg.subsample, rng, cfg.oversample, h)
        region = confidence_region(F, center, beta, z, h)
        regions.append(region)
        bonus = width_bonus(region, F, h=h)
        Q[h] = np.clip(F.at_step(h)[center] + bonus, 0.0, H)
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return Q, PolicyTable(pi), V


def _trajectory_stats(trajectories, H: int, S: int, A: int) -> dict:
    counts = np.zeros((H, S, A, S), dtype=np.int64)
    rsums = np.zeros((H, S, A))
    for log in trajectories:
        _accumulate(counts, rsums, log)
    return {"counts": counts, "reward_sums": rsums}


def _accumulate(counts, rsums, log: EpisodeLog) -> None:
    for h in range(counts.shape[0]):
        s, a = log.states[h], log.actions[h]
        counts[h, s, a, log.states[h + 1]] += 1
        rsums[h, s, a] += log.rewards[h]


class GeneralLsviAgent:
    name = "general_lsvi"

    def __init__(self, F: FiniteFunctionClass, cfg: GeneralLsviConfig, S: int, A: int,
                 s_init: int = 0, rng=None):
        F.check_range(cfg.H)
        if F.at_step(0).shape[1:] != (S, A):
            raise ParameterError("function class tables do not match (S, A)")
        if not F.stationary and F.members.shape[1] != cfg.H:
            raise ParameterError("step-indexed class must have H steps")
        self.F = F
        self.cfg = cfg
        self.s_init = s_init
        self.trajectories: list[EpisodeLog] = []
        self.stats = _trajectory_stats([], cfg.H, S, A)
        # only consumed when subsampling is on
        self.rng = rng if rng is not None else make_rng(0)

    @property
    def k(self) -> int:
        return len(self.trajectories) + 1

    def plan(self):
        _, pol, V = backward_pass_general(self.k, self.trajectories, self.F, self.cfg,
                                          self.s_init, self.rng, self.stats)
        return pol, float(V[0, self.s_init])

    def observe(self, log: EpisodeLog) -> None:
        self.trajectories.append(log)
        _accumulate(self.stats["counts"], self.stats["reward_sums"], log)

    def step_episode(self, mdp: TabularMdp, rng: np.random.Generator) -> EpisodeLog:
        pol, _ = self.plan()
        log = sample_episode(mdp, pol, rng, k=self.k)
        self.observe(log)
        return log


def build_function_class(mdp: TabularMdp, n_perturbed: int, scale: float = 0.5,
                         seed: int = 0, include_truth: bool = True) -> FiniteFunctionClass:
    """{Q* of the ground truth} plus noisy copies, step-indexed, clipped to [0, H+1]."""
    rng = make_rng(seed)
    _, Qstar, _ = exact_optimal_values(mdp)
    H = mdp.H
    copies = [np.clip(Qstar + rng.normal(0.0, scale * H, size=Qstar.shape), 0.0, H + 1)
              for _ in range(n_perturbed)]
    members = ([Qstar] if include_truth else []) + copies
    return FiniteFunctionClass(np.array(members))
