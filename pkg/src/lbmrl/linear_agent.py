"""Robust LSVI with linear features and a known misspecification level."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EpisodeLog, ParameterError, PolicyTable, TabularMdp, sample_episode


@dataclass
class LinearLsviConfig:
    K: int
    H: int
    d: int
    zeta: float = 0.0
    c_beta: float = 1.0
    lam: float = 1.0
    delta: float = 0.05

    def __post_init__(self):
        if self.K < 1 or self.H < 1 or self.d < 1:
            raise ParameterError("K, H, d must be >= 1")
        if self.c_beta <= 0 or self.lam <= 0:
            raise ParameterError("c_beta and lam must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError("delta must lie in (0, 1)")
        if not 0.0 <= self.zeta <= 1.0:
            raise ParameterError("zeta must lie in [0, 1]")


def bonus_beta_linear(k: int, cfg: LinearLsviConfig) -> float:
    """beta_k = c_beta * (4 sqrt(k d) zeta + sqrt((lam+1) d^2 log(4dKH/delta))) * H."""
    if k < 1:
        raise ParameterError("episode index k starts at 1")
    arg = 4.0 * cfg.d * cfg.K * cfg.H / cfg.delta
    if arg <= 0:
        raise ParameterError("log argument must be positive")
    bias = 4.0 * np.sqrt(k * cfg.d) * cfg.zeta
    stat = np.sqrt((cfg.lam + 1.0) * cfg.d ** 2 * np.log(arg))
    return float(cfg.c_beta * (bias + stat) * cfg.H)


def sherman_morrison(inv: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Inverse of (M + x x^T) given inv = M^{-1}."""
    u = inv @ x
    return inv - np.outer(u, u) / (1.0 + x @ u)


class LinearLsviState:
    """Per-step Gram matrices and the transition data seen so far.

    Regression sums only need visit counts per ``(s, a, s')`` and the observed
    reward totals per ``(s, a)`` because features depend on ``(s, a)`` alone.
    """

    def __init__(self, phi: np.ndarray, H: int, lam: float):
        self.phi = np.asarray(phi, dtype=float)
        S, A, d = self.phi.shape
        self.H = H
        self.lam = lam
        self.gram = np.tile(lam * np.eye(d), (H, 1, 1))
        self.gram_inv = np.tile(np.eye(d) / lam, (H, 1, 1))
        self.counts = np.zeros((H, S, A, S), dtype=np.int64)
        self.reward_sums = np.zeros((H, S, A))
        self.transitions: list[np.ndarray] = []  # rows of (s, a, r, s') per h
        self.k = 1  # next episode index

    @property
    def d(self) -> int:
        return self.phi.shape[-1]

    def add(self, log: EpisodeLog) -> None:
        rows = []
        for h in range(self.H):
            s, a, s_next = log.states[h], log.actions[h], log.states[h + 1]
            x = self.phi[s, a]
            self.gram[h] += np.outer(x, x)
            self.gram_inv[h] = sherman_morrison(self.gram_inv[h], x)
            self.counts[h, s, a, s_next] += 1
            self.reward_sums[h, s, a] += log.rewards[h]
            rows.append((s, a, log.rewards[h], s_next))
        self.transitions.append(np.array(rows, dtype=float))
        self.k += 1


def ridge_weights(h: int, V_next: np.ndarray, state: LinearLsviState) -> np.ndarray:
    """Ridge solution w = Lambda_h^{-1} sum phi (r + V_next(s'))."""
    n_sa = state.counts[h].sum(axis=-1)
    target_sums = state.reward_sums[h] + state.counts[h] @ V_next
    b = np.einsum("sad,sa->d", state.phi, target_sums)
    if not np.any(n_sa):
        return np.zeros(state.d)
    return state.gram_inv[h] @ b


def backward_pass_linear(k: int, state: LinearLsviState, cfg: LinearLsviConfig):
    """Optimistic Q tables, greedy policy and V tables for episode ``k``."""
    H = cfg.H
    S, A, _ = state.phi.shape
    beta = bonus_beta_linear(k, cfg)
    Q = np.zeros((H, S, A))
    V = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        w = ridge_weights(h, V[h + 1], state)
        quad = np.einsum("sad,de,sae->sa", state.phi, state.gram_inv[h], state.phi)
        bonus = beta * np.sqrt(np.maximum(quad, 0.0))
        Q[h] = np.clip(state.phi @ w + bonus, 0.0, H)
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return Q, PolicyTable(pi), V


class LinearLsviAgent:
    name = "linear_lsvi"

    def __init__(self, phi: np.ndarray, cfg: LinearLsviConfig, s_init: int = 0):
        if phi.shape[-1] != cfg.d:
            raise ParameterError("feature dimension does not match cfg.d")
        self.cfg = cfg
        self.s_init = s_init
        self.state = LinearLsviState(phi, cfg.H, cfg.lam)

    @property
    def k(self) -> int:
        return self.state.k

    def plan(self):
        """Return ``(policy, optimistic V_1^k(s_init))`` for the coming episode."""
        _, pol, V = backward_pass_linear(self.state.k, self.state, self.cfg)
        return pol, float(V[0, self.s_init])

    def observe(self, log: EpisodeLog) -> None:
        self.state.add(log)

    def step_episode(self, mdp: TabularMdp, rng: np.random.Generator) -> EpisodeLog:
        pol, _ = self.plan()
        log = sample_episode(mdp, pol, rng, k=self.state.k)
        self.observe(log)
        return log
