"""Run configuration: TOML or JSON files describing plant, network, controller and experiment."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .markov import ChainValidationError, validate
from .model import ConfigError, PlantModel, Problem, benchmark_problem, BENCHMARK_X0


@dataclass
class RunConfig:
    plant: dict
    network: dict
    controller: dict
    experiment: dict = field(default_factory=dict)

    def problem(self) -> Problem:
        """Build and validate the problem; any failure becomes `ConfigError`."""
        try:
            pl = self.plant
            net = self.network
            ctl = self.controller
            plant = PlantModel(pl["A"], pl["B"], pl["Mx"], pl["nx"], pl["Mu"], pl["nu"])
            d_lo, d_hi = net["d_bounds"]
            chain = validate(net["mu"], net["phi"], int(d_lo), int(d_hi))
            return Problem(plant, chain, tuple(net["h_bounds"]), tuple(net["s_bounds"]),
                           int(ctl["N"]), ctl["Q"], ctl["R"])
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError, ChainValidationError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.experiment.get("x0", [0.0] * len(self.plant["A"])), dtype=float)

    def to_dict(self) -> dict:
        out = {"plant": self.plant, "network": self.network, "controller": self.controller}
        if self.experiment:
            out["experiment"] = self.experiment
        return _plain(out)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        try:
            cfg = cls(dict(obj["plant"]), dict(obj["network"]), dict(obj["controller"]),
                      dict(obj.get("experiment", {})))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"missing section: {exc}") from exc
        cfg.problem()
        return cfg


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def benchmark_config() -> RunConfig:
    """The benchmark plant, network and controller with the standard initial state."""
    p = benchmark_problem()
    pl, ch = p.plant, p.chain
    cfg = RunConfig(
        plant={"A": pl.A, "B": pl.B, "Mx": pl.Mx, "nx": pl.nx, "Mu": pl.Mu, "nu": pl.nu},
        network={"d_bounds": [ch.d_min, ch.d_max], "h_bounds": list(p.h_bounds),
                 "s_bounds": list(p.s_bounds), "mu": ch.mu, "phi": ch.phi},
        controller={"N": p.N, "Q": p.Q, "R": p.R},
        experiment={"variant": "stochastic", "horizon": 60, "seed": 0, "x0": BENCHMARK_X0},
    )
    return RunConfig.from_dict(cfg.to_dict())


def loads(text: str) -> RunConfig:
    """Parse JSON (if the text starts with ``{``) or TOML."""
    try:
        obj = json.loads(text) if text.lstrip().startswith("{") else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    return RunConfig.from_dict(obj)


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def dumps(cfg: RunConfig, fmt: str = "toml") -> str:
    if fmt == "json":
        return json.dumps(cfg.to_dict(), indent=2)
    return tomli_w.dumps(cfg.to_dict())


def dump(cfg: RunConfig, path) -> None:
    fmt = "json" if str(path).endswith(".json") else "toml"
    Path(path).write_text(dumps(cfg, fmt))
