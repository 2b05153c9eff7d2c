"""Robust UCRL with value-targeted regression over a finite model class."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import (EpisodeLog, ParameterError, PolicyTable, TabularMdp, exact_optimal_values,
                  make_rng, sample_episode)


@dataclass(frozen=True)
class FiniteModelClass:
    members: np.ndarray  # (N, H, S, A, S)

    def __post_init__(self):
        m = np.asarray(self.members, dtype=float)
        if m.ndim != 5 or m.shape[0] < 1 or m.shape[2] != m.shape[4]:
            raise ParameterError("model class needs shape (N, H, S, A, S), N >= 1")
        if np.any(m < 0) or np.max(np.abs(m.sum(-1) - 1.0)) > 1e-12:
            raise ParameterError("every row of every model must be a distribution")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @property
    def N(self) -> int:
        return self.members.shape[0]


@dataclass
class VtrConfig:
    K: int
    H: int
    zeta: float = 0.0
    delta: float = 0.05
    c_prime: float = 1.0
    alpha_cover: float | None = None  # defaults to 1 / (K * H)

    def __post_init__(self):
        if self.K < 1 or self.H < 1:
            raise ParameterError("K and H must be >= 1")
        if self.alpha_cover is None:
            self.alpha_cover = 1.0 / (self.K * self.H)
        if self.c_prime <= 0 or self.alpha_cover < 0:
            raise ParameterError("c_prime must be positive and alpha_cover nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError("delta must lie in (0, 1)")


@dataclass
class VtrHistory:
    """Past transitions and the value tables that were in force when they happened."""

    states: list[np.ndarray] = field(default_factory=list)   # (H+1,) each
    actions: list[np.ndarray] = field(default_factory=list)  # (H,) each
    values: list[np.ndarray] = field(default_factory=list)   # (H+1, S) each

    def __len__(self) -> int:
        return len(self.states)

    def append(self, log: EpisodeLog, V: np.ndarray) -> None:
        V = np.array(V, dtype=float)
        V.setflags(write=False)
        self.states.append(np.asarray(log.states))
        self.actions.append(np.asarray(log.actions))
        self.values.append(V)


def _predictions(P: np.ndarray, hist: VtrHistory, k_idx: int) -> np.ndarray:
    """P V_{h+1}(s_h, a_h) for every step h of one past episode."""
    s, a, V = hist.states[k_idx], hist.actions[k_idx], hist.values[k_idx]
    H = len(a)
    return np.array([P[h, s[h], a[h]] @ V[h + 1] for h in range(H)])


def vtr_loss(P: np.ndarray, hist: VtrHistory) -> float:
    """sum_{k', h} (P V_{h+1}^{k'}(s, a) - V_{h+1}^{k'}(s'))^2."""
    total = 0.0
    for i in range(len(hist)):
        pred = _predictions(P, hist, i)
        s, V = hist.states[i], hist.values[i]
        realized = V[np.arange(1, len(pred) + 1), s[1:]]
        total += float(((pred - realized) ** 2).sum())
    return total


def model_distance(P: np.ndarray, P_hat: np.ndarray, hist: VtrHistory) -> float:
    """sum_{k', h} (P V_{h+1}^{k'}(s, a) - P_hat V_{h+1}^{k'}(s, a))^2."""
    total = 0.0
    for i in range(len(hist)):
        total += float(((_predictions(P, hist, i) - _predictions(P_hat, hist, i)) ** 2).sum())
    return total


def vtr_minimizer(cls: FiniteModelClass, hist: VtrHistory) -> int:
    if cls.N == 0:
        raise ParameterError("empty model class")
    losses = np.array([vtr_loss(P, hist) for P in cls.members])
    return int(np.argmin(losses))


def radius_beta_vtr(k: int, cfg: VtrConfig, N: int) -> float:
    """3 sqrt(kH) zeta + 5 sqrt(C' H^2 log(4KHN/delta)) + 4 sqrt(alpha k H^2)."""
    if k < 1:
        raise ParameterError("episode index k starts at 1")
    arg = 4.0 * cfg.K * cfg.H * N / cfg.delta
    if arg <= 0 or N < 1:
        raise ParameterError("log argument must be positive")
    H = cfg.H
    return float(3.0 * np.sqrt(k * H) * cfg.zeta
                 + 5.0 * np.sqrt(cfg.c_prime * H ** 2 * np.log(arg))
                 + 4.0 * np.sqrt(cfg.alpha_cover * k * H ** 2))


def optimal_dp(P: np.ndarray, r: np.ndarray):
    """Q_{H+1} = 0, Q_h = r + P V_{h+1}, V_h = max_a Q_h; lowest-index greedy."""
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q[h] = r + P[h] @ V[h + 1]
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return Q, V, PolicyTable(pi)


@dataclass
class OptimisticChoice:
    model_id: int
    Q: np.ndarray
    V: np.ndarray
    policy: PolicyTable
    in_set: np.ndarray  # ids of B_k


def optimistic_model(cls: FiniteModelClass, hist: VtrHistory, beta: float, r: np.ndarray,
                     s_init: int = 0, distances: np.ndarray | None = None,
                     hat: int | None = None) -> OptimisticChoice:
    """argmax over B_k = {P : d_k(P, P_hat) <= beta^2} of the optimal value at s_init.

    ``distances``/``hat`` let the caller pass incrementally maintained
    quantities; otherwise everything is rescanned from ``hist``.
    """
    if hat is None:
        hat = vtr_minimizer(cls, hist)
    if distances is None:
        distances = np.array([model_distance(P, cls.members[hat], hist) for P in cls.members])
    in_set = np.flatnonzero(distances <= beta ** 2)
    if hat not in in_set:
        in_set = np.union1d(in_set, [hat])
    best = None
    for n in in_set:  # ascending ids: strict > keeps the lowest id on ties
        Q, V, pi = optimal_dp(cls.members[n], r)
        if best is None or V[0, s_init] > best.V[0, s_init]:
            best = OptimisticChoice(int(n), Q, V, pi, in_set)
    return best


class VtrAgent:
    """UCRL-VTR with running loss and pairwise-distance sums."""

    name = "ucrl_vtr"

    def __init__(self, cls: FiniteModelClass, cfg: VtrConfig, r: np.ndarray, s_init: int = 0):
        if cls.members.shape[1] != cfg.H:
            raise ParameterError("model class horizon does not match cfg.H")
        self.cls = cls
        self.cfg = cfg
        self.r = np.asarray(r, dtype=float)
        self.s_init = s_init
        self.hist = VtrHistory()
        self.losses = np.zeros(cls.N)
        self.pair_dist = np.zeros((cls.N, cls.N))
        self.last: OptimisticChoice | None = None

    @property
    def k(self) -> int:
        return len(self.hist) + 1

    def select(self) -> OptimisticChoice:
        hat = int(np.argmin(self.losses))
        beta = radius_beta_vtr(self.k, self.cfg, self.cls.N)
        self.last = optimistic_model(self.cls, self.hist, beta, self.r, self.s_init,
                                     distances=self.pair_dist[:, hat], hat=hat)
        return self.last

    def plan(self):
        choice = self.select()
        return choice.policy, float(choice.V[0, self.s_init])

    def observe(self, log: EpisodeLog, V: np.ndarray | None = None) -> None:
        if V is None:
            V = self.last.V
        s, a = log.states, log.actions
        H = len(a)
        idx = np.arange(H)
        nxt = V[idx + 1]  # (H, S)
        # predictions of every member for every step: (N, H)
        rows = self.cls.members[:, idx, s[:-1], a]  # (N, H, S)
        pred = np.einsum("nhs,hs->nh", rows, nxt)
        realized = V[idx + 1, s[1:]]
        self.losses += ((pred - realized) ** 2).sum(axis=1)
        self.pair_dist += ((pred[:, None, :] - pred[None, :, :]) ** 2).sum(axis=2)
        self.hist.append(log, V)

    def step_episode(self, mdp: TabularMdp, rng: np.random.Generator) -> EpisodeLog:
        choice = self.select()
        log = sample_episode(mdp, choice.policy, rng, k=self.k)
        self.observe(log, choice.V)
        return log


def perturbed_kernels(P: np.ndarray, n: int, tv: float, seed: int = 0,
                      attractor: int | None = None,
                      rows: np.ndarray | None = None) -> list[np.ndarray]:
    """Copies of P whose rows move by TV <= tv.

    Without ``attractor`` rows move toward random distributions. With it, a
    random half of the eligible ``rows`` (boolean (H, S, A), default all) of
    each copy move toward that state instead.
    """
    rng = make_rng(seed)
    S = P.shape[-1]
    out = []
    for _ in range(n):
        if attractor is None:
            q = rng.dirichlet(np.full(S, 0.3), size=P.shape[:-1])
        else:
            q = P.copy()
            mask = rng.random(P.shape[:-1]) < 0.5
            if rows is not None:
                mask &= rows
            q[mask] = np.eye(S)[attractor]
        out.append((1.0 - tv) * P + tv * q)
    return out


def build_model_class(truth: TabularMdp, n_perturbed: int, tv: float = 0.5, seed: int = 0,
                      include_truth: bool = True,
                      surrogate: np.ndarray | None = None) -> FiniteModelClass:
    """{truth or surrogate} plus perturbed copies of the truth.

    Half of the copies send suboptimal actions toward the state of highest
    optimal value, i.e. optimistic lies the agent has to rule out; the other
    half move toward random rows.
    ``surrogate`` replaces the truth when it is excluded, e.g. a kernel that is
    locally wrong at trap states but right on average.
    """
    V, _, pistar = exact_optimal_values(truth)
    best = int(np.argmax(V[1]))
    suboptimal = np.eye(truth.A, dtype=bool)[pistar.pi] == 0
    n_opt = n_perturbed // 2
    members = (perturbed_kernels(truth.P, n_opt, tv, seed, attractor=best, rows=suboptimal)
               + perturbed_kernels(truth.P, n_perturbed - n_opt, tv, seed + 1))
    head = truth.P if include_truth else surrogate
    if head is not None:
        members = [np.asarray(head)] + members
    return FiniteModelClass(np.array(members))
