"""Eluder dimension of a few small classes across a range of epsilon.

    python3 scripts/eluder_table.py
"""
from __future__ import annotations

import numpy as np

from lbmrl.eluder import EluderQuery, cover_size, eluder_dimension, lift_model_class
from lbmrl.env import build_linear_env
from lbmrl.model_agent import build_model_class


def classes():
    n = 6
    yield "indicators (n=6)", np.vstack([np.zeros(n), np.eye(n)])
    thetas = np.array([[a, b] for a in np.linspace(-1, 1, 5) for b in np.linspace(-1, 1, 5)])
    xs = np.array([[np.cos(t), np.sin(t)] for t in np.linspace(0, np.pi, 8)])
    yield "linear d=2 (25 thetas, 8 points)", thetas @ xs.T
    mdp, _ = build_linear_env(4, 2, 2, 1, seed=0)
    kernels = build_model_class(mdp, 4, tv=0.5, seed=0).members
    V = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
    yield "lifted model class (5 models, 8 points)", lift_model_class(kernels, V)


def main() -> None:
    eps_grid = [0.05, 0.1, 0.25, 0.5, 1.0]
    print(f"{'class':<42}" + "".join(f"{e:>8}" for e in eps_grid) + f"{'greedy cover@0.1':>20}")
    for name, values in classes():
        dims = [eluder_dimension(EluderQuery(values, e)) for e in eps_grid]
        print(f"{name:<42}" + "".join(f"{d:>8}" for d in dims)
              + f"{cover_size(values, 0.1):>20}")


if __name__ == "__main__":
    main()
