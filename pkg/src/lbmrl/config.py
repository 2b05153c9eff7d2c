"""Experiment configuration: a YAML/JSON document with three blocks.

Schema (every key optional unless marked)::

    env:
      kind: linear | chain            # required
      S, A, H: int                    # required
      d: int                          # linear; defaults to S*A (one-hot)
      slip: float                     # chain
      seed: int
      unreachable: [int]              # linear; states with no inbound mass
      concentration: float            # linear; Dirichlet parameter of the base rows
      injector:
        mode: none | global | local_trap
        zeta: float
        delta_tv: float
        trap_states: [int]
        reach_prob: float | null
        seed: int
    algorithm:
      name: linear_lsvi | general_lsvi | ucrl_vtr | meta   # required
      base: linear_lsvi | general_lsvi | ucrl_vtr          # meta only
      zeta: float | "unknown"
      c_beta, lam, delta, c_prime, cover_T, log_w, alpha_cover: float
      subsample: bool
      L_const, alpha_exp, beta_exp, dim: float              # meta
      class:                                                # general_lsvi / ucrl_vtr
        n_perturbed: int
        scale: float        # general: noise scale as a fraction of H
        tv: float           # vtr: TV distance of perturbed copies
        include_truth: bool
        surrogate: base     # vtr: put the uninjected kernel in place of the truth
        file: path          # general: table file, M rows of S*A or H*S*A values
        seed: int
    run:
      K: int                          # required
      seeds: [int]
      out: path
      checkpoints: [int]
    sweep:
      zetas: [float]
      algorithms: [name]
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


ALGORITHMS = ("linear_lsvi", "general_lsvi", "ucrl_vtr", "meta")


@dataclass
class InjectorConfig:
    mode: str = "none"
    zeta: float = 0.0
    delta_tv: float = 1.0
    trap_states: list[int] = field(default_factory=list)
    reach_prob: float | None = None
    seed: int = 0


@dataclass
class EnvConfig:
    kind: str
    S: int
    A: int
    H: int
    d: int | None = None
    slip: float = 0.1
    seed: int = 0
    unreachable: list[int] = field(default_factory=list)
    concentration: float = 0.5
    injector: InjectorConfig = field(default_factory=InjectorConfig)


@dataclass
class ClassConfig:
    n_perturbed: int = 15
    scale: float = 0.5
    tv: float = 0.5
    include_truth: bool = True
    surrogate: str | None = None
    file: str | None = None
    seed: int = 0


@dataclass
class AlgorithmConfig:
    name: str
    base: str | None = None
    zeta: float | str = 0.0
    c_beta: float = 1.0
    lam: float = 1.0
    delta: float = 0.05
    c_prime: float = 1.0
    cover_T: float | None = None
    log_w: float = 0.0
    subsample: bool = False
    alpha_cover: float | None = None
    L_const: float = 1.0
    alpha_exp: float = 1.0
    beta_exp: float = 2.0
    dim: float | None = None
    cls: ClassConfig = field(default_factory=ClassConfig)


@dataclass
class RunBlock:
    K: int
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "results"
    checkpoints: list[int] = field(default_factory=list)


@dataclass
class SweepBlock:
    zetas: list[float] = field(default_factory=list)
    algorithms: list[str] = field(default_factory=list)


@dataclass
class RunConfig:
    env: EnvConfig
    algorithm: AlgorithmConfig
    run: RunBlock
    sweep: SweepBlock = field(default_factory=SweepBlock)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["algorithm"]["class"] = d["algorithm"].pop("cls")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _take(block: Any, path: str, allowed: dict[str, type | tuple], required=()) -> dict:
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(block).__name__}")
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}",
                          field=f"{path}.{unknown[0]}")
    for key in required:
        if key not in block:
            raise ConfigError(f"{path}.{key}: required key missing", field=path)
    out = {}
    for key, val in block.items():
        types = allowed[key]
        if val is None and (types is type(None) or
                            (isinstance(types, tuple) and type(None) in types)):
            out[key] = None
            continue
        if isinstance(val, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise ConfigError(f"{path}.{key}: expected {_tname(types)}, got bool",
                              field=f"{path}.{key}")
        if not isinstance(val, types):
            raise ConfigError(f"{path}.{key}: expected {_tname(types)}, "
                              f"got {type(val).__name__}", field=f"{path}.{key}")
        out[key] = val
    return out


def _tname(types) -> str:
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


NUM = (int, float)
OPT_NUM = (int, float, type(None))


def _int_list(val, path):
    if not isinstance(val, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                            for v in val):
        raise ConfigError(f"{path}: expected a list of integers")
    return [int(v) for v in val]


def parse_config(doc: Any) -> RunConfig:
    top = _take(doc, "config", {"env": dict, "algorithm": dict, "run": dict, "sweep": dict},
                required=("env", "algorithm", "run"))

    env = _take(top["env"], "env", {
        "kind": str, "S": int, "A": int, "H": int, "d": (int, type(None)), "slip": NUM,
        "seed": int, "unreachable": list, "concentration": NUM, "injector": dict}, required=("kind", "S", "A", "H"))
    if env["kind"] not in ("linear", "chain"):
        raise ConfigError(f"env.kind: expected 'linear' or 'chain', got {env['kind']!r}")
    inj = _take(env.pop("injector", None), "env.injector", {
        "mode": str, "zeta": NUM, "delta_tv": NUM, "trap_states": list,
        "reach_prob": OPT_NUM, "seed": int})
    if "trap_states" in inj:
        inj["trap_states"] = _int_list(inj["trap_states"], "env.injector.trap_states")
    if inj.get("mode", "none") not in ("none", "global", "local_trap"):
        raise ConfigError(f"env.injector.mode: unknown mode {inj['mode']!r}")
    if "unreachable" in env:
        env["unreachable"] = _int_list(env["unreachable"], "env.unreachable")
    env_cfg = EnvConfig(**env, injector=InjectorConfig(**inj))

    alg = _take(top["algorithm"], "algorithm", {
        "name": str, "base": (str, type(None)), "zeta": (int, float, str), "c_beta": NUM,
        "lam": NUM, "delta": NUM, "c_prime": NUM, "cover_T": OPT_NUM, "log_w": NUM,
        "subsample": bool, "alpha_cover": OPT_NUM, "L_const": NUM, "alpha_exp": NUM,
        "beta_exp": NUM, "dim": OPT_NUM, "class": dict}, required=("name",))
    if alg["name"] not in ALGORITHMS:
        raise ConfigError(f"algorithm.name: expected one of {', '.join(ALGORITHMS)}")
    if alg["name"] == "meta" and alg.get("base") not in ALGORITHMS[:3]:
        raise ConfigError("algorithm.base: meta needs a base algorithm "
                          "(linear_lsvi, general_lsvi or ucrl_vtr)")
    if isinstance(alg.get("zeta"), str) and alg["zeta"] != "unknown":
        raise ConfigError("algorithm.zeta: expected a number or 'unknown'")
    cls = _take(alg.pop("class", None), "algorithm.class", {
        "n_perturbed": int, "scale": NUM, "tv": NUM, "include_truth": bool,
        "surrogate": (str, type(None)), "file": (str, type(None)), "seed": int})
    alg_cfg = AlgorithmConfig(**alg, cls=ClassConfig(**cls))

    run = _take(top["run"], "run", {"K": int, "seeds": list, "out": str, "checkpoints": list},
                required=("K",))
    if run["K"] < 1:
        raise ConfigError("run.K: must be >= 1")
    for key in ("seeds", "checkpoints"):
        if key in run:
            run[key] = _int_list(run[key], f"run.{key}")
    sweep = _take(top.get("sweep"), "sweep", {"zetas": list, "algorithms": list})
    for name in sweep.get("algorithms", []):
        if name not in ALGORITHMS:
            raise ConfigError(f"sweep.algorithms: unknown algorithm {name!r}")
    return RunConfig(env=env_cfg, algorithm=alg_cfg, run=RunBlock(**run),
                     sweep=SweepBlock(**sweep))


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: cannot parse{where}: {exc}") from exc
    try:
        return parse_config(doc)
    except ConfigError as exc:
        field = exc.field or str(exc).split(":")[0]
        line = _line_of(text, field)
        raise ConfigError(f"{path}{f':{line}' if line else ''}: {exc}", field) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _line_of(text: str, dotted: str) -> int | None:
    """Line of the deepest key along a dotted path that exists in the document."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for part in dotted.split(".")[1:] if dotted.startswith("config") else dotted.split("."):
        if not isinstance(node, yaml.MappingNode):
            break
        for key, value in node.value:
            if key.value == part:
                line = key.start_mark.line + 1
                node = value
                break
        else:
            break
    return line
