"""Ground-truth episodic MDPs, exact DP oracles, sampling and misspecification.

Steps are 0-indexed internally: ``h = 0`` is the first decision step and the
value tables carry one extra row for ``V_{H+1} = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

ROW_TOL = 1e-12


class ParameterError(ValueError):
    """Invalid sizes or hyperparameters."""


class ConstructionError(ValueError):
    """A requested instance cannot be built with valid distributions."""


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator so every run is reproducible from its seed."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [make_rng(ss) for ss in np.random.SeedSequence(int(seed)).spawn(n)]


@dataclass(frozen=True)
class TabularMdp:
    P: np.ndarray  # (H, S, A, S)
    r: np.ndarray  # (S, A), stationary in h
    s_init: int = 0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ParameterError(f"P must have shape (H, S, A, S), got {P.shape}")
        H, S, A, _ = P.shape
        if min(H, S, A) < 1:
            raise ParameterError("H, S and A must all be >= 1")
        if r.shape != (S, A):
            raise ParameterError(f"r must have shape {(S, A)}, got {r.shape}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=-1) - 1.0)) > ROW_TOL:
            raise ParameterError("every transition row must be a distribution")
        if np.any(r < 0) or np.any(r > 1):
            raise ParameterError("rewards must lie in [0, 1]")
        if not 0 <= self.s_init < S:
            raise ParameterError(f"s_init={self.s_init} out of range")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)

    @property
    def H(self) -> int:
        return self.P.shape[0]

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]


@dataclass(frozen=True)
class LinearMdpSpec:
    """Features and measures of a (possibly misspecified) linear model."""

    phi: np.ndarray  # (S, A, d)
    mu: np.ndarray  # (H, d, S)
    theta: np.ndarray  # (H, d)

    @property
    def d(self) -> int:
        return self.phi.shape[-1]

    def kernel(self) -> np.ndarray:
        """Induced kernel <phi(s,a), mu_h(.)>, shape (H, S, A, S)."""
        return np.einsum("sad,hdt->hsat", self.phi, self.mu)

    def rewards(self) -> np.ndarray:
        """Induced rewards <phi(s,a), theta_h>, shape (H, S, A)."""
        return np.einsum("sad,hd->hsa", self.phi, self.theta)


@dataclass(frozen=True)
class MisspecInjector:
    mode: str = "none"  # none | global | local_trap
    zeta_target: float = 0.0
    delta_tv: float = 1.0
    trap_states: tuple[int, ...] = ()
    reach_prob: float | None = None

    def __post_init__(self):
        if self.mode not in ("none", "global", "local_trap"):
            raise ParameterError(f"unknown injector mode {self.mode!r}")
        if not 0.0 <= self.zeta_target <= 1.0:
            raise ParameterError("zeta_target must lie in [0, 1]")
        if not 0.0 <= self.delta_tv <= 1.0:
            raise ParameterError("delta_tv must lie in [0, 1]")
        object.__setattr__(self, "trap_states", tuple(int(s) for s in self.trap_states))
        if self.mode == "local_trap":
            if not self.trap_states:
                raise ParameterError("local_trap mode needs at least one trap state")
            if self.reach_prob is not None:
                if not 0.0 <= self.reach_prob <= self.max_reach_prob():
                    raise ParameterError(
                        f"reach_prob={self.reach_prob} exceeds the admissible "
                        f"{self.max_reach_prob():.3g} for zeta={self.zeta_target}, "
                        f"delta_tv={self.delta_tv}")

    def max_reach_prob(self) -> float:
        # The gate row itself is off by reach_prob, hence the cap at zeta.
        z, dl = self.zeta_target, self.delta_tv
        if dl == 0.0:
            return z
        return min(z, z ** 4 / dl ** 4, 1.0)

    def gate_prob(self) -> float:
        return self.max_reach_prob() if self.reach_prob is None else self.reach_prob


@dataclass(frozen=True)
class PolicyTable:
    pi: np.ndarray  # (H, S) integer actions

    def __post_init__(self):
        pi = np.asarray(self.pi)
        if pi.ndim != 2 or not np.issubdtype(pi.dtype, np.integer):
            raise ParameterError("policy table must be an integer (H, S) array")
        pi = pi.astype(np.int64)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    def probs(self, A: int) -> np.ndarray:
        """One-hot action probabilities, shape (H, S, A)."""
        if self.pi.min() < 0 or self.pi.max() >= A:
            raise ParameterError("policy action index out of range")
        return np.eye(A)[self.pi]


@dataclass(frozen=True)
class MixturePolicy:
    """Uniform choice of one member per episode."""

    members: tuple[PolicyTable, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ParameterError("mixture policy needs at least one member")
        object.__setattr__(self, "members", members)


Policy = Union[PolicyTable, MixturePolicy]


@dataclass
class EpisodeLog:
    states: np.ndarray  # (H+1,)
    actions: np.ndarray  # (H,)
    rewards: np.ndarray  # (H,)
    k: int = 0
    member: int = 0  # mixture member followed, 0 for plain policies

    @property
    def ret(self) -> float:
        return float(self.rewards.sum())


# ---------------------------------------------------------------- builders


def build_chain_env(S: int, A: int, H: int, slip: float = 0.1) -> TabularMdp:
    """RiverSwim-style chain: action 0 moves left, action 1 tries to move right.

    Actions beyond 1 behave like action 0.
    """
    if S < 2 or A < 2 or H < 1:
        raise ParameterError("chain env needs S >= 2, A >= 2, H >= 1")
    if not 0.0 <= slip <= 0.5:
        raise ParameterError("slip must lie in [0, 0.5]")
    P1 = np.zeros((S, A, S))
    for s in range(S):
        left = max(s - 1, 0)
        right = min(s + 1, S - 1)
        P1[s, :, left] = 1.0
        P1[s, 1, :] = 0.0
        P1[s, 1, right] += 1.0 - slip
        P1[s, 1, s] += slip
    r = np.zeros((S, A))
    r[0, :] = 0.05
    r[S - 1, :] = 1.0
    return TabularMdp(P=np.broadcast_to(P1, (H, S, A, S)).copy(), r=r, s_init=0)


def build_linear_env(d: int, S: int, A: int, H: int, seed: int = 0,
                     unreachable: Sequence[int] = (), s_init: int = 0,
                     concentration: float = 0.5) -> tuple[TabularMdp, LinearMdpSpec]:
    """Exact linear MDP by mixing ``d`` base distributions with simplex features.

    ``d == S*A`` gives one-hot features, i.e. an arbitrary tabular kernel.
    States in ``unreachable`` receive no transition mass, which leaves room
    for a gated trap region (see :func:`inject_misspecification`).
    """
    if d < 1 or S < 1 or A < 1 or H < 1:
        raise ParameterError("d, S, A, H must be >= 1")
    if d > S * A:
        raise ParameterError(f"d={d} exceeds S*A={S * A}")
    unreachable = sorted(set(int(s) for s in unreachable))
    if s_init in unreachable:
        raise ParameterError("the initial state cannot be unreachable")
    support = np.setdiff1d(np.arange(S), unreachable)
    rng = make_rng(seed)

    if d == S * A:
        phi = np.eye(d).reshape(S, A, d)
    else:
        phi = rng.dirichlet(np.full(d, concentration), size=(S, A))
        # make sure every base distribution is actually used
        phi[np.unravel_index(np.arange(d), (S, A))] = np.eye(d)

    mu = np.zeros((H, d, S))
    mu[:, :, support] = rng.dirichlet(np.full(len(support), concentration), size=(H, d))
    theta_row = rng.uniform(0.0, 1.0, size=d)
    theta = np.broadcast_to(theta_row, (H, d)).copy()

    spec = LinearMdpSpec(phi=phi, mu=mu, theta=theta)
    P = spec.kernel()
    P /= P.sum(axis=-1, keepdims=True)
    r = np.clip(spec.rewards()[0], 0.0, 1.0)
    return TabularMdp(P=P, r=r, s_init=s_init), spec


def inject_misspecification(mdp: TabularMdp, spec: LinearMdpSpec,
                            inj: MisspecInjector, seed: int = 0) -> TabularMdp:
    """Perturb ``mdp`` so that ``spec`` becomes a misspecified model of it.

    ``global``: every row moves by at most ``zeta`` in TV and every reward by at
    most ``zeta``. ``local_trap``: rows at the trap states move by exactly
    ``delta_tv`` (they become partially absorbing) and rewards there move by at
    most ``delta_tv``; the trap is entered only through a gate of probability
    ``reach_prob`` at the first step, so under every policy the step-wise
    occupancy of the trap is at most ``reach_prob``.
    """
    if inj.mode == "none":
        return mdp
    rng = make_rng(seed)
    P_lin = spec.kernel()
    r_lin = spec.rewards()
    if P_lin.shape != mdp.P.shape:
        raise ConstructionError("linear spec and MDP disagree on shape")
    if np.any(P_lin < -ROW_TOL) or np.max(np.abs(P_lin.sum(-1) - 1)) > 1e-10:
        raise ConstructionError("the linear kernel has invalid rows; nothing to perturb")
    P_lin = np.clip(P_lin, 0.0, None)
    P_lin /= P_lin.sum(-1, keepdims=True)
    # stationary rewards are required by TabularMdp; take the first step's
    r_ref = r_lin[0]
    if np.max(np.abs(r_lin - r_ref)) > 1e-12:
        raise ConstructionError("step-dependent linear rewards are not supported")
    H, S, A, _ = P_lin.shape
    zeta = inj.zeta_target

    if inj.mode == "global":
        q = rng.dirichlet(np.ones(S), size=(H, S, A))
        P = (1.0 - zeta) * P_lin + zeta * q
        r = np.clip(r_ref + rng.uniform(-zeta, zeta, size=(S, A)), 0.0, 1.0)
        return TabularMdp(P=P, r=r, s_init=mdp.s_init)

    traps = np.array(inj.trap_states)
    if traps.min() < 0 or traps.max() >= S:
        raise ConstructionError("trap state index out of range")
    if mdp.s_init in set(traps.tolist()):
        raise ConstructionError("the initial state cannot be a trap state")
    inbound = P_lin[..., traps].sum(-1)
    inbound[:, traps, :] = 0.0
    if np.max(inbound) > ROW_TOL:
        raise ConstructionError(
            "trap states are reachable in the base model; build it with those "
            "states unreachable so the gate controls access")
    p_gate = inj.gate_prob()
    dl = inj.delta_tv
    entry = int(traps[0])
    P = P_lin.copy()
    # trap rows: (1-dl) * original + dl * mass on the trap state itself
    for t in traps:
        P[:, t, :, :] *= 1.0 - dl
        P[:, t, :, t] += dl
    P[0, mdp.s_init, :, :] *= 1.0 - p_gate
    P[0, mdp.s_init, :, entry] += p_gate
    r = r_ref.copy()
    for t in traps:
        lo = r[t] >= 0.5
        r[t] = np.where(lo, r[t] - dl * r[t], r[t] + dl * (1.0 - r[t]))
    return TabularMdp(P=P, r=np.clip(r, 0.0, 1.0), s_init=mdp.s_init)


# ------------------------------------------------------------- DP oracles


def exact_optimal_values(mdp: TabularMdp):
    """Backward induction. Returns ``(V, Q, pistar)`` with ``V[H] = 0``."""
    H, S, A = mdp.H, mdp.S, mdp.A
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.r + mdp.P[h] @ V[h + 1]
        pi[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return V, Q, PolicyTable(pi)


def _check_policy(mdp: TabularMdp, pol: PolicyTable) -> None:
    if pol.pi.shape != (mdp.H, mdp.S):
        raise ParameterError(f"policy shape {pol.pi.shape} does not match "
                             f"(H, S) = {(mdp.H, mdp.S)}")
    if pol.pi.min() < 0 or pol.pi.max() >= mdp.A:
        raise ParameterError("policy action index out of range")


def _action_probs(mdp: TabularMdp, pol) -> np.ndarray:
    if isinstance(pol, PolicyTable):
        _check_policy(mdp, pol)
        return pol.probs(mdp.A)
    probs = np.asarray(pol, dtype=float)
    if probs.shape != (mdp.H, mdp.S, mdp.A):
        raise ParameterError("stochastic policy must have shape (H, S, A)")
    return probs


def policy_values(mdp: TabularMdp, pol) -> np.ndarray:
    """V^pi_h(s) for a deterministic or stochastic (H, S, A) policy."""
    probs = _action_probs(mdp, pol)
    V = np.zeros((mdp.H + 1, mdp.S))
    for h in range(mdp.H - 1, -1, -1):
        Qh = mdp.r + mdp.P[h] @ V[h + 1]
        V[h] = (probs[h] * Qh).sum(axis=1)
    return V


def evaluate_policy(mdp: TabularMdp, pol) -> float:
    """Exact V_1^pi(s_init); a mixture is worth the mean of its members."""
    if isinstance(pol, MixturePolicy):
        return float(np.mean([evaluate_policy(mdp, m) for m in pol.members]))
    return float(policy_values(mdp, pol)[0, mdp.s_init])


def occupancy_measure(mdp: TabularMdp, pol) -> np.ndarray:
    """d_h^pi(s, a) from s_init, shape (H, S, A)."""
    if isinstance(pol, MixturePolicy):
        return np.mean([occupancy_measure(mdp, m) for m in pol.members], axis=0)
    probs = _action_probs(mdp, pol)
    d = np.zeros((mdp.H, mdp.S, mdp.A))
    state = np.zeros(mdp.S)
    state[mdp.s_init] = 1.0
    for h in range(mdp.H):
        d[h] = state[:, None] * probs[h]
        state = np.einsum("sa,sat->t", d[h], mdp.P[h])
    return d


def uniform_policy(mdp: TabularMdp) -> np.ndarray:
    return np.full((mdp.H, mdp.S, mdp.A), 1.0 / mdp.A)


def max_expected_stepwise(mdp: TabularMdp, g: np.ndarray) -> np.ndarray:
    """sup over all policies of E_{d_h^pi}[g_h(s,a)], for each h.

    Each entry is a finite-horizon control problem with reward only at step h,
    so backward induction gives the exact supremum.
    """
    H = mdp.H
    out = np.zeros(H)
    for h in range(H):
        V = g[h].max(axis=1)
        for j in range(h - 1, -1, -1):
            V = (mdp.P[j] @ V).max(axis=1)
        out[h] = V[mdp.s_init]
    return out


# ------------------------------------------------------ assumption checks


@dataclass
class LbmReport:
    """Moments of the transition (xi) and reward (eta) errors.

    ``xi_probe``/``eta_probe`` hold ``max_{probe, h} E_{d_h^pi}[err^beta]``, a
    lower bound on the supremum over all policies. ``xi_sup``/``eta_sup`` hold
    the exact supremum over policies computed by DP.
    """

    betas: list[int]
    xi_probe: dict[int, float]
    eta_probe: dict[int, float]
    xi_sup: dict[int, float]
    eta_sup: dict[int, float]
    xi_pointwise_max: float
    eta_pointwise_max: float
    n_probes: int
    xi_avg_probe: dict[int, float] = field(default_factory=dict)

    def satisfied(self, zeta: float, tol: float = 1e-12) -> bool:
        return all(self.xi_probe[b] <= zeta ** b + tol and self.eta_probe[b] <= zeta ** b + tol
                   for b in self.betas)

    def rows(self) -> list[dict]:
        return [dict(beta=b, xi_probe=self.xi_probe[b], eta_probe=self.eta_probe[b],
                     xi_sup=self.xi_sup[b], eta_sup=self.eta_sup[b],
                     xi_avg_probe=self.xi_avg_probe.get(b, float("nan")))
                for b in self.betas]


def misspecification_errors(mdp: TabularMdp, spec: LinearMdpSpec):
    """Pointwise errors xi_h(s,a) (TV) and eta_h(s,a), each shape (H, S, A)."""
    xi = 0.5 * np.abs(mdp.P - spec.kernel()).sum(axis=-1)
    eta = np.abs(mdp.r[None] - spec.rewards())
    return xi, eta


def default_probes(mdp: TabularMdp, n_random: int = 50, seed: int = 0) -> list:
    """pi*, the uniform policy and greedy policies of perturbed rewards."""
    rng = make_rng(seed)
    probes: list = [exact_optimal_values(mdp)[2], uniform_policy(mdp)]
    for _ in range(n_random):
        r = np.clip(mdp.r + rng.normal(0.0, 0.5, size=mdp.r.shape), 0.0, 1.0)
        probes.append(exact_optimal_values(TabularMdp(mdp.P, r, mdp.s_init))[2])
    return probes


def verify_lbm_assumption(mdp: TabularMdp, spec: LinearMdpSpec, probes: Sequence,
                          beta_max: int = 4) -> LbmReport:
    if not 1 <= beta_max <= 4:
        raise ParameterError("beta_max must lie in [1, 4]")
    if len(probes) == 0:
        raise ParameterError("need at least one probe policy")
    xi, eta = misspecification_errors(mdp, spec)
    occ = [occupancy_measure(mdp, p) for p in probes]
    betas = list(range(1, beta_max + 1))
    xi_probe, eta_probe, xi_sup, eta_sup, xi_avg = {}, {}, {}, {}, {}
    for b in betas:
        xb, eb = xi ** b, eta ** b
        xi_probe[b] = max(float((d * xb).sum(axis=(1, 2)).max()) for d in occ)
        eta_probe[b] = max(float((d * eb).sum(axis=(1, 2)).max()) for d in occ)
        xi_avg[b] = max(float((d * xb).sum() / mdp.H) for d in occ)
        xi_sup[b] = float(max_expected_stepwise(mdp, xb).max())
        eta_sup[b] = float(max_expected_stepwise(mdp, eb).max())
    return LbmReport(betas=betas, xi_probe=xi_probe, eta_probe=eta_probe,
                     xi_sup=xi_sup, eta_sup=eta_sup,
                     xi_pointwise_max=float(xi.max()), eta_pointwise_max=float(eta.max()),
                     n_probes=len(probes), xi_avg_probe=xi_avg)


# --------------------------------------------------------------- sampling


def sample_episode(mdp: TabularMdp, pol: Policy, rng: np.random.Generator,
                   k: int = 0) -> EpisodeLog:
    member = 0
    if isinstance(pol, MixturePolicy):
        member = int(rng.integers(len(pol.members)))
        pol = pol.members[member]
    _check_policy(mdp, pol)
    H = mdp.H
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H)
    s = mdp.s_init
    u = rng.random(H)
    for h in range(H):
        a = int(pol.pi[h, s])
        states[h], actions[h] = s, a
        rewards[h] = mdp.r[s, a]
        cdf = np.cumsum(mdp.P[h, s, a])
        s = min(int(np.searchsorted(cdf, u[h] * cdf[-1], side="right")), mdp.S - 1)
    states[H] = s
    return EpisodeLog(states=states, actions=actions, rewards=rewards, k=k, member=member)


def tabular_linear_spec(mdp: TabularMdp) -> LinearMdpSpec:
    """One-hot features that represent ``mdp`` exactly."""
    S, A, H = mdp.S, mdp.A, mdp.H
    phi = np.eye(S * A).reshape(S, A, S * A)
    mu = mdp.P.reshape(H, S * A, S).copy()
    theta = np.broadcast_to(mdp.r.reshape(-1), (H, S * A)).copy()
    return LinearMdpSpec(phi=phi, mu=mu, theta=theta)
