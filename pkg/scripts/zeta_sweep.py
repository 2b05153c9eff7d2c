"""Tail per-episode regret of the known-zeta agent and the meta-algorithm versus zeta.

Uses the local-trap linear instance: a state whose transitions are off by TV 1,
entered with probability zeta**4 at the first step.

    python3 scripts/zeta_sweep.py --zetas 0.025,0.05,0.1,0.2 --K 4000 --seeds 5
"""
from __future__ import annotations

import argparse

import numpy as np

from lbmrl.env import (MisspecInjector, build_linear_env, exact_optimal_values,
                       inject_misspecification, make_rng)
from lbmrl.linear_agent import LinearLsviAgent, LinearLsviConfig
from lbmrl.meta import run_meta, stability_constant
from lbmrl.runner import Instance, run_agent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--zetas", default="0.025,0.05,0.1,0.2")
    ap.add_argument("--K", type=int, default=4000)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--c-beta", type=float, default=0.03)
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--L", type=float, default=1.0, help="L_const of the stability constant")
    args = ap.parse_args()

    H, S, A, d = 4, 6, 2, 12
    base, spec = build_linear_env(d, S, A, H, seed=0, unreachable=[5])
    C = stability_constant(d, H, 0.05, args.K, L_const=args.L)
    tail = slice(3 * args.K // 4, None)
    print(f"{'zeta':>7} {'known-zeta tail':>16} {'meta tail':>10} {'meta/known final':>17}")
    for zeta in (float(z) for z in args.zetas.split(",")):
        mdp = inject_misspecification(base, spec, MisspecInjector("local_trap", zeta, 1.0, (5,)))
        vstar = float(exact_optimal_values(mdp)[0][0, 0])
        inst = Instance(mdp, base, spec, vstar)

        def factory(z, K):
            return LinearLsviAgent(spec.phi, LinearLsviConfig(K=K, H=H, d=d, zeta=z,
                                                              c_beta=args.c_beta, lam=args.lam))

        known, meta, finals = [], [], []
        for s in range(args.seeds):
            log = run_agent(factory(zeta, args.K), inst, args.K, make_rng(s))
            _, recs = run_meta(factory, mdp, args.K, C, make_rng(s))
            regret = np.array([vstar - r.policy_value for r in recs])
            known.append(log.instant[tail].mean())
            meta.append(regret[tail].mean())
            finals.append(regret.sum() / max(log.cumulative[-1], 1e-12))
        print(f"{zeta:>7.3f} {np.mean(known):>16.5f} {np.mean(meta):>10.5f} "
              f"{np.median(finals):>17.3f}")


if __name__ == "__main__":
    main()
