"""Parameter-free wrapper: epochs with halving misspecification guesses.

Epoch ``i`` runs a fresh base agent with guess ``2**-i`` for ``4**i``
episodes, estimates the value of the epoch's uniform mixture policy from
realized returns, and stops as soon as two consecutive estimates differ by
more than ``C * 2**-i``. The previous epoch's mixture is then executed for
the rest of the budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .env import (MixturePolicy, ParameterError, PolicyTable, TabularMdp, evaluate_policy,
                  sample_episode)


class Agent(Protocol):
    def plan(self) -> tuple[PolicyTable, float]: ...

    def observe(self, log) -> None: ...


# base(zeta_guess, K_epoch) -> fresh agent
AgentFactory = Callable[[float, int], Agent]


@dataclass
class EpochRecord:
    epoch: int
    zeta_guess: float
    nominal_len: int
    epoch_len: int
    vbar: float
    exact_value: float
    violated: bool = False
    compared: bool = False


@dataclass
class EpisodeRecord:
    k: int
    policy_value: float
    optimistic_value: float
    ret: float
    epoch: int  # -1 during the commit phase


@dataclass
class MetaState:
    K: int
    C: float
    epochs: list[EpochRecord] = field(default_factory=list)
    policies: list[MixturePolicy] = field(default_factory=list)
    committed: int | None = None
    violation_epoch: int | None = None
    consumed: int = 0


def epoch_schedule(K: int) -> list[tuple[float, int, int]]:
    """``(zeta_i, nominal K_i, truncated length)`` for i = 0..floor(log2 sqrt(3K+1))."""
    if K < 1:
        raise ParameterError("budget K must be >= 1")
    last = int(math.floor(math.log2(math.sqrt(3 * K + 1))))
    # floor of log2 on an exact power of two can land one below through rounding
    while 4 ** (last + 1) <= 3 * K + 1:
        last += 1
    while 4 ** last > 3 * K + 1:
        last -= 1
    out = []
    remaining = K
    for i in range(last + 1):
        nominal = 4 ** i
        length = min(nominal, remaining)
        remaining -= length
        out.append((2.0 ** -i, nominal, length))
    return out


def stability_constant(d: float, H: int, delta: float, K: int, alpha_exp: float = 1.0,
                       beta_exp: float = 2.0, L_const: float = 1.0) -> float:
    """3 sqrt(8 H^2 log(2 ceil(log2 sqrt(3K+1)) / delta)) + 6 L d^alpha H^beta."""
    if d <= 0 or H < 1 or K < 1 or not 0 < delta < 1 or L_const < 0:
        raise ParameterError("stability constant needs d, H, K > 0, delta in (0,1), L >= 0")
    m = math.ceil(math.log2(math.sqrt(3 * K + 1)))
    arg = 2.0 * m / delta
    if arg <= 0:
        raise ParameterError("log argument must be positive")
    # K = 1 gives m = 1; log stays positive for every delta < 1
    return 3.0 * math.sqrt(8.0 * H ** 2 * math.log(arg)) + 6.0 * L_const * d ** alpha_exp * H ** beta_exp


def run_single_epoch(agent: Agent, K_i: int, mdp: TabularMdp, rng: np.random.Generator,
                     on_episode: Callable | None = None, k0: int = 0):
    """Run ``agent`` for ``K_i`` episodes; return (mean return, mixture, records)."""
    if K_i < 1:
        raise ParameterError("an epoch needs at least one episode")
    policies = []
    returns = []
    records = []
    for j in range(K_i):
        pol, v_opt = agent.plan()
        log = sample_episode(mdp, pol, rng, k=k0 + j + 1)
        agent.observe(log)
        policies.append(pol)
        returns.append(log.ret)
        rec = EpisodeRecord(k=k0 + j + 1, policy_value=evaluate_policy(mdp, pol),
                            optimistic_value=v_opt, ret=log.ret, epoch=-1)
        records.append(rec)
        if on_episode is not None:
            on_episode(rec)
    return float(np.mean(returns)), MixturePolicy(tuple(policies)), records


def run_meta(base: AgentFactory, mdp: TabularMdp, K: int, C: float,
             rng: np.random.Generator, min_fraction: float = 0.5):
    """Execute the meta-algorithm for exactly ``K`` episodes.

    A truncated epoch shorter than ``min_fraction`` of its nominal length is
    recorded but does not take part in the stability comparison.
    Returns ``(MetaState, list[EpisodeRecord])``.
    """
    state = MetaState(K=K, C=C)
    records: list[EpisodeRecord] = []
    for i, (zeta_i, nominal, length) in enumerate(epoch_schedule(K)):
        if length == 0:
            break
        agent = base(zeta_i, nominal)
        vbar, mix, recs = run_single_epoch(agent, length, mdp, rng, k0=state.consumed)
        for rec in recs:
            rec.epoch = i
        records.extend(recs)
        state.consumed += length
        ep = EpochRecord(epoch=i, zeta_guess=zeta_i, nominal_len=nominal, epoch_len=length,
                         vbar=vbar, exact_value=evaluate_policy(mdp, mix))
        state.epochs.append(ep)
        state.policies.append(mix)
        if i >= 1 and length >= min_fraction * nominal:
            ep.compared = True
            if abs(vbar - state.epochs[i - 1].vbar) > C * zeta_i:
                ep.violated = True
                state.violation_epoch = i
                state.committed = i - 1
                break
    if state.committed is None:
        state.committed = len(state.policies) - 1
    commit = state.policies[state.committed]
    commit_value = evaluate_policy(mdp, commit)
    while state.consumed < K:
        log = sample_episode(mdp, commit, rng, k=state.consumed + 1)
        state.consumed += 1
        records.append(EpisodeRecord(k=state.consumed, policy_value=commit_value,
                                     optimistic_value=float("nan"), ret=log.ret, epoch=-1))
    return state, records
