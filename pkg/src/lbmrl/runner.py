"""Build environments and agents from a config, run them, write CSVs."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import AlgorithmConfig, ConfigError, EnvConfig, RunConfig
from .env import (LinearMdpSpec, MisspecInjector, TabularMdp, build_chain_env, build_linear_env,
                  default_probes, evaluate_policy, exact_optimal_values, inject_misspecification,
                  make_rng, sample_episode, tabular_linear_spec, verify_lbm_assumption)
from .general_agent import (FiniteFunctionClass, GeneralLsviAgent, GeneralLsviConfig,
                            build_function_class)
from .linear_agent import LinearLsviAgent, LinearLsviConfig
from .meta import run_meta, stability_constant
from .model_agent import FiniteModelClass, VtrAgent, VtrConfig, build_model_class

log = logging.getLogger(__name__)

EPISODE_COLUMNS = ("k", "instant_regret", "cumulative_regret", "optimistic_value",
                   "policy_value", "return", "epoch")
EPOCH_COLUMNS = ("epoch", "zeta_guess", "epoch_len", "vbar", "violated")
SUMMARY_COLUMNS = ("seed", "final_cumulative_regret", "runtime_sec")
CHECKPOINT_COLUMNS = ("seed", "k", "cumulative_regret")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


@dataclass
class Instance:
    mdp: TabularMdp          # the environment agents interact with
    base: TabularMdp         # before injection
    spec: LinearMdpSpec      # the (now misspecified) linear model
    vstar: float


def build_instance(env: EnvConfig) -> Instance:
    if env.kind == "chain":
        base = build_chain_env(env.S, env.A, env.H, env.slip)
        spec = tabular_linear_spec(base)
    else:
        d = env.d if env.d is not None else env.S * env.A
        base, spec = build_linear_env(d, env.S, env.A, env.H, seed=env.seed,
                                      unreachable=env.unreachable,
                                      concentration=float(env.concentration))
    ic = env.injector
    inj = MisspecInjector(mode=ic.mode, zeta_target=float(ic.zeta), delta_tv=float(ic.delta_tv),
                          trap_states=tuple(ic.trap_states), reach_prob=ic.reach_prob)
    mdp = inject_misspecification(base, spec, inj, seed=ic.seed)
    V, _, _ = exact_optimal_values(mdp)
    return Instance(mdp=mdp, base=base, spec=spec, vstar=float(V[0, mdp.s_init]))


def load_function_class(path: str, S: int, A: int, H: int | None = None) -> FiniteFunctionClass:
    """Table file: one member per row, whitespace- or comma-separated.

    Rows of S*A values are step-independent tables; rows of H*S*A values
    are step-indexed, ordered (h, s, a).
    """
    text = Path(path).read_text().replace(",", " ")
    rows = np.loadtxt(text.splitlines(), ndmin=2)
    if rows.shape[1] == S * A:
        return FiniteFunctionClass(rows.reshape(-1, S, A))
    if H is not None and rows.shape[1] == H * S * A:
        return FiniteFunctionClass(rows.reshape(-1, H, S, A))
    expected = f"{S * A}" + (f" or {H * S * A}" if H is not None else "")
    raise ConfigError(f"{path}: expected {expected} values per row, got {rows.shape[1]}")


def save_function_class(F: FiniteFunctionClass, path: str) -> None:
    np.savetxt(path, F.members.reshape(F.M, -1), fmt="%.12g")


def _zeta_value(alg: AlgorithmConfig) -> float:
    return 0.0 if alg.zeta == "unknown" else float(alg.zeta)


def make_factory(alg: AlgorithmConfig, inst: Instance, K: int, name: str | None = None):
    """Return ``factory(zeta, K_run) -> agent`` for a non-meta algorithm."""
    name = name or alg.name
    mdp, spec = inst.mdp, inst.spec
    H, S, A = mdp.H, mdp.S, mdp.A
    if name == "linear_lsvi":
        def factory(zeta, K_run):
            cfg = LinearLsviConfig(K=K_run, H=H, d=spec.d, zeta=zeta, c_beta=alg.c_beta,
                                   lam=alg.lam, delta=alg.delta)
            return LinearLsviAgent(spec.phi, cfg, s_init=mdp.s_init)
        return factory
    if name == "general_lsvi":
        cc = alg.cls
        if cc.file:
            F = load_function_class(cc.file, S, A, H)
        else:
            F = build_function_class(mdp, cc.n_perturbed, cc.scale, cc.seed, cc.include_truth)

        def factory(zeta, K_run):
            cfg = GeneralLsviConfig(K=K_run, H=H, zeta=zeta, delta=alg.delta,
                                    c_prime=alg.c_prime, cover_T=alg.cover_T,
                                    log_w=alg.log_w, subsample=alg.subsample)
            return GeneralLsviAgent(F, cfg, S, A, s_init=mdp.s_init, rng=make_rng(cc.seed))
        return factory
    if name == "ucrl_vtr":
        cc = alg.cls
        surrogate = inst.base.P if cc.surrogate == "base" else None
        models = build_model_class(mdp, cc.n_perturbed, cc.tv, cc.seed, cc.include_truth,
                                   surrogate=surrogate)

        def factory(zeta, K_run):
            cfg = VtrConfig(K=K_run, H=H, zeta=zeta, delta=alg.delta, c_prime=alg.c_prime,
                            alpha_cover=alg.alpha_cover)
            return VtrAgent(models, cfg, mdp.r, s_init=mdp.s_init)
        return factory
    raise ConfigError(f"no factory for algorithm {name!r}")


@dataclass
class RegretLog:
    k: np.ndarray
    instant: np.ndarray
    cumulative: np.ndarray
    optimistic: np.ndarray
    policy_value: np.ndarray
    returns: np.ndarray
    epoch: np.ndarray
    vstar: float
    epochs: list = field(default_factory=list)
    runtime: float = 0.0

    @classmethod
    def from_records(cls, vstar: float, policy_values, optimistic, returns, epoch,
                     epochs=None, runtime=0.0) -> "RegretLog":
        pv = np.asarray(policy_values, dtype=float)
        inst = vstar - pv
        return cls(k=np.arange(1, len(pv) + 1), instant=inst, cumulative=np.cumsum(inst),
                   optimistic=np.asarray(optimistic, dtype=float), policy_value=pv,
                   returns=np.asarray(returns, dtype=float),
                   epoch=np.asarray(epoch, dtype=int), vstar=vstar, epochs=epochs or [],
                   runtime=runtime)

    def regret_at(self, k: int) -> float:
        return float(self.cumulative[k - 1])

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EPISODE_COLUMNS)
            for row in zip(self.k, self.instant, self.cumulative, self.optimistic,
                           self.policy_value, self.returns, self.epoch):
                w.writerow([fmt(v) for v in row])

    def write_epochs_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EPOCH_COLUMNS)
            for ep in self.epochs:
                w.writerow([fmt(ep.epoch), fmt(ep.zeta_guess), fmt(ep.epoch_len),
                            fmt(ep.vbar), fmt(ep.violated)])


def run_agent(agent, inst: Instance, K: int, rng: np.random.Generator) -> RegretLog:
    start = time.perf_counter()
    pv, opt, ret = [], [], []
    for k in range(1, K + 1):
        pol, v1 = agent.plan()
        pv.append(evaluate_policy(inst.mdp, pol))
        opt.append(v1)
        ep = sample_episode(inst.mdp, pol, rng, k=k)
        agent.observe(ep)
        ret.append(ep.ret)
    return RegretLog.from_records(inst.vstar, pv, opt, ret, np.zeros(K, dtype=int),
                                  runtime=time.perf_counter() - start)


def meta_constant(cfg: RunConfig, inst: Instance) -> float:
    alg = cfg.algorithm
    if alg.dim is not None:
        dim = alg.dim
    elif alg.base == "linear_lsvi":
        dim = inst.spec.d
    else:
        dim = inst.mdp.S * inst.mdp.A  # finite domain bounds the eluder dimension
    return stability_constant(dim, inst.mdp.H, alg.delta, cfg.run.K, alg.alpha_exp,
                              alg.beta_exp, alg.L_const)


def run_seed(cfg: RunConfig, seed: int, inst: Instance | None = None) -> RegretLog:
    inst = inst or build_instance(cfg.env)
    K = cfg.run.K
    rng = make_rng(seed)
    alg = cfg.algorithm
    if alg.name == "meta":
        factory = make_factory(alg, inst, K, name=alg.base)
        start = time.perf_counter()
        state, recs = run_meta(factory, inst.mdp, K, meta_constant(cfg, inst), rng)
        return RegretLog.from_records(
            inst.vstar, [r.policy_value for r in recs], [r.optimistic_value for r in recs],
            [r.ret for r in recs], [r.epoch for r in recs], epochs=state.epochs,
            runtime=time.perf_counter() - start)
    agent = make_factory(alg, inst, K)(_zeta_value(alg), K)
    return run_agent(agent, inst, K, rng)


def write_manifest(cfg: RunConfig, out: Path, seeds) -> None:
    manifest = {"config_sha256": cfg.digest(), "seeds": list(seeds), "config": cfg.to_dict()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _run_one(args):
    cfg, seed = args
    return seed, run_seed(cfg, seed)


def run_experiment(cfg: RunConfig, out: str | Path | None = None, seeds=None,
                   jobs: int = 1) -> dict[int, RegretLog]:
    """One CSV per seed, an epoch CSV for meta runs, summary.csv and manifest.json.

    With ``run.checkpoints`` set, checkpoints.csv holds the cumulative regret of
    every seed at those episodes.
    """
    out = Path(out or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(seeds if seeds is not None else cfg.run.seeds)
    write_manifest(cfg, out, seeds)
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_run_one, [(cfg, s) for s in seeds]))
    else:
        inst = build_instance(cfg.env)
        results = {s: run_seed(cfg, s, inst) for s in seeds}
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in seeds:
            res = results[s]
            res.write_csv(out / f"run_seed{s}.csv")
            if res.epochs:
                res.write_epochs_csv(out / f"epochs_seed{s}.csv")
            w.writerow([fmt(s), fmt(res.cumulative[-1]), f"{res.runtime:.3f}"])
            log.info("seed %d: final regret %.4f", s, res.cumulative[-1])
    checkpoints = [k for k in cfg.run.checkpoints if 1 <= k <= cfg.run.K]
    if checkpoints:
        with open(out / "checkpoints.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CHECKPOINT_COLUMNS)
            for s in seeds:
                for k in checkpoints:
                    w.writerow([fmt(s), fmt(k), fmt(results[s].regret_at(k))])
    return results


def _cell_config(cfg: RunConfig, zeta: float | None, algorithm: str | None) -> RunConfig:
    env = cfg.env
    alg = cfg.algorithm
    if zeta is not None:
        env = replace(env, injector=replace(env.injector, zeta=zeta))
        if alg.zeta != "unknown":
            alg = replace(alg, zeta=zeta)
    if algorithm is not None:
        if algorithm == "meta":
            alg = replace(alg, name="meta", base=alg.base or "linear_lsvi")
        else:
            alg = replace(alg, name=algorithm)
    return replace(cfg, env=env, algorithm=alg)


def _sweep_cell(args):
    cfg, zeta, algorithm, seed = args
    try:
        res = run_seed(_cell_config(cfg, zeta, algorithm), seed)
        return zeta, algorithm, seed, res, None
    except Exception as exc:  # keep the other cells
        return zeta, algorithm, seed, None, f"{type(exc).__name__}: {exc}"


def sweep(cfg: RunConfig, out: str | Path | None = None, seeds=None, jobs: int = 1) -> list[dict]:
    """Cross product over zetas x algorithms x seeds; median/IQR of final regret."""
    out = Path(out or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(seeds if seeds is not None else cfg.run.seeds)
    zetas = cfg.sweep.zetas or [None]
    algorithms = cfg.sweep.algorithms or [None]
    write_manifest(cfg, out, seeds)
    cells = [(cfg, z, a, s) for z in zetas for a in algorithms for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]

    finals: dict[tuple, list[float]] = {}
    errors: dict[tuple, list[str]] = {}
    for zeta, algorithm, seed, res, err in results:
        key = (zeta, algorithm)
        zname = "base" if zeta is None else fmt(zeta)
        aname = algorithm or cfg.algorithm.name
        if err is not None:
            errors.setdefault(key, []).append(f"seed {seed}: {err}")
            log.error("cell zeta=%s algorithm=%s seed=%d failed: %s", zname, aname, seed, err)
            continue
        res.write_csv(out / f"run_{aname}_zeta{zname}_seed{seed}.csv")
        finals.setdefault(key, []).append(float(res.cumulative[-1]))

    rows = []
    for zeta in zetas:
        for algorithm in algorithms:
            vals = np.array(finals.get((zeta, algorithm), []))
            q1, med, q3 = (np.percentile(vals, [25, 50, 75]) if len(vals)
                           else (np.nan, np.nan, np.nan))
            rows.append({"zeta": "base" if zeta is None else fmt(zeta),
                         "algorithm": algorithm or cfg.algorithm.name,
                         "n_runs": len(vals), "median_final_regret": med,
                         "iqr_final_regret": q3 - q1,
                         "errors": "; ".join(errors.get((zeta, algorithm), []))})
    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["zeta", "algorithm", "n_runs", "median_final_regret", "iqr_final_regret", "errors"]
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] if isinstance(row[c], str) else fmt(row[c]) for c in cols])
    return rows


def verify_cmd(cfg: RunConfig, n_random: int = 50, seed: int = 0):
    """Misspecification moments of the configured instance against its linear model."""
    inst = build_instance(cfg.env)
    probes = default_probes(inst.mdp, n_random=n_random, seed=seed)
    return verify_lbm_assumption(inst.mdp, inst.spec, probes, beta_max=4)
