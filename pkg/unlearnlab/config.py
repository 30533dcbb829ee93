# -*- coding: utf-8 -*-
"""Run configuration.

A configuration is a single JSON file whose sections map onto the
dataclasses below. Every unknown key is rejected, and all of them are
reported together. Command-line flags are applied on top by the CLI; the
only environment variable consulted is ``UNLEARN_LAB_FIXTURES``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

from unlearnlab.clients import Port, PortConfigError, PortDescriptor, PortKind
from unlearnlab.clients.fixtures import FIXTURES_ENV
from unlearnlab.logger import StageLogger
from unlearnlab.losses import (
    DEFAULT_IDK_TEMPLATES,
    LossError,
    LossSpec,
    Method,
    Regularizer,
)
from unlearnlab.metrics import PROBABILITY_MODES
from unlearnlab.neighborset import Thresholds
from unlearnlab.util import LabError


class ConfigError(LabError):
    """Invalid configuration; the CLI exits with status 2 on it."""

    def __init__(self, problems: List[str]) -> None:
        LabError.__init__(self, "; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class Hyperparameters:
    lr: float
    epochs: int
    optimizer: str = "AdamW"
    weight_decay: float = 0.01
    batch_size: Optional[int] = 32


SCENARIOS: Dict[str, Dict[Method, Hyperparameters]] = {
    "realworld": {
        Method.GA: Hyperparameters(lr=5e-6, epochs=3),
        Method.NPO: Hyperparameters(lr=3e-5, epochs=3),
        Method.IDK: Hyperparameters(lr=3e-6, epochs=2),
        Method.DPO: Hyperparameters(lr=8e-6, epochs=4),
    },
    "tofu": {
        Method.GA: Hyperparameters(lr=2e-5, epochs=4),
        Method.NPO: Hyperparameters(lr=4e-5, epochs=5),
        Method.IDK: Hyperparameters(lr=2e-5, epochs=2),
        Method.DPO: Hyperparameters(lr=4e-5, epochs=2),
    },
}

TOY_SCENARIO = "toy"


@dataclass(frozen=True)
class CorpusSizes:
    """Entities per role in each block of the toy corpus."""

    forget_entities: int = 5
    syn_similar: int = 8
    domain: int = 6
    entity: int = 6


@dataclass(frozen=True)
class ToyConfig:
    sizes: CorpusSizes = field(default_factory=CorpusSizes)
    init_scale: float = 0.1
    fit_lr: float = 1.0
    fit_epochs: int = 20000
    target_probability: float = 0.95
    max_steps: int = 500
    fe_band: Tuple[float, float] = (0.65, 0.75)
    # IDK runs keep refining inside the band until this share of forget
    # facts has the IDK token as argmax; 0 turns refinement off.
    idk_share: float = 0.9
    beta: float = 0.1
    # Scaled by 1e6 from the real-world table.
    learning_rates: Dict[str, float] = field(
        default_factory=lambda: {"GA": 5.0, "NPO": 30.0, "IDK": 3.0, "DPO": 8.0}
    )

    def lr_for(self, method: Method) -> float:
        return self.learning_rates[method.value]


@dataclass(frozen=True)
class Paths:
    output: str = "out"


def default_ports() -> Dict[PortKind, PortDescriptor]:
    return {
        PortKind.ENTITY_MASKER: PortDescriptor(PortKind.ENTITY_MASKER, "builtin:rules"),
        PortKind.QA_GENERATOR: PortDescriptor(
            PortKind.QA_GENERATOR, "builtin:answer-table"
        ),
        PortKind.EMBEDDER: PortDescriptor(PortKind.EMBEDDER, "builtin:hashing"),
        PortKind.NLI_JUDGE: PortDescriptor(PortKind.NLI_JUDGE, "builtin:lexical-nli"),
    }


@dataclass(frozen=True)
class RunConfig:
    thresholds: Thresholds = field(default_factory=Thresholds)
    loss: LossSpec = field(default_factory=lambda: LossSpec(Method.GA))
    scenario: str = "realworld"
    hyperparameters: Dict[str, Hyperparameters] = field(default_factory=dict)
    probability_mode: str = "arithmetic"
    idk_templates: Tuple[str, ...] = DEFAULT_IDK_TEMPLATES
    seed: int = 0
    workers: int = 1
    ports: Dict[PortKind, PortDescriptor] = field(default_factory=default_ports)
    paths: Paths = field(default_factory=Paths)
    toy: ToyConfig = field(default_factory=ToyConfig)
    fixtures: Optional[str] = None
    record: bool = False

    def hyperparameters_for(self, method: Method) -> Hyperparameters:
        """Scenario defaults for ‘method’ with per-method overrides applied."""
        if method.value in self.hyperparameters:
            return self.hyperparameters[method.value]
        if self.scenario == TOY_SCENARIO:
            return Hyperparameters(
                lr=self.toy.lr_for(method),
                epochs=self.toy.max_steps,
                optimizer="SGD",
                weight_decay=0.0,
                batch_size=None,
            )
        return SCENARIOS[self.scenario][method]

    def open_port(
        self, kind: PortKind, logger: Optional[StageLogger] = None, **options: Any
    ) -> Port:
        from unlearnlab.clients.registry import open_port

        if kind not in self.ports:
            raise ConfigError(
                ["no port configured for ‘{0}’ (set ports.{0})".format(kind.value)]
            )
        return open_port(
            self.ports[kind],
            fixtures_dir=self.fixtures,
            record=self.record,
            logger=logger,
            **options
        )


# Accepted keys per section; nested dicts are checked recursively.
_SCHEMA: Dict[str, Any] = {
    "thresholds": {"theta_high": None, "theta_low": None, "min_cluster_size": None},
    "loss": {"method": None, "regularizer": None, "beta": None, "reg_weight": None},
    "scenario": None,
    "hyperparameters": "*hyperparameters",
    "probability_mode": None,
    "idk_templates": None,
    "seed": None,
    "workers": None,
    "ports": "*ports",
    "paths": {"output": None},
    "toy": {
        "sizes": {"forget_entities": None, "syn_similar": None, "domain": None, "entity": None},
        "init_scale": None,
        "fit_lr": None,
        "fit_epochs": None,
        "target_probability": None,
        "max_steps": None,
        "fe_band": None,
        "idk_share": None,
        "beta": None,
        "learning_rates": "*methods",
    },
}

_HYPER_KEYS = {"lr", "epochs", "optimizer", "weight_decay", "batch_size"}
_PORT_KEYS = {"endpoint", "capabilities"}
_CAPABILITY_KEYS = {"max_concurrency", "deterministic"}
_METHODS = set(m.value for m in Method)


def unknown_keys(data: Mapping[str, Any], schema: Mapping[str, Any], prefix: str = "") -> List[str]:
    """Dotted paths of every key in ‘data’ that ‘schema’ does not allow."""
    found: List[str] = []
    for key, value in data.items():
        path = prefix + key
        if key not in schema:
            found.append(path)
            continue
        sub = schema[key]
        if isinstance(sub, dict) and isinstance(value, dict):
            found.extend(unknown_keys(value, sub, path + "."))
        elif sub == "*methods" and isinstance(value, dict):
            found.extend(path + "." + k for k in value if k not in _METHODS)
        elif sub == "*hyperparameters" and isinstance(value, dict):
            for method, params in value.items():
                if method not in _METHODS:
                    found.append(path + "." + method)
                elif isinstance(params, dict):
                    found.extend(
                        "{0}.{1}.{2}".format(path, method, k)
                        for k in params
                        if k not in _HYPER_KEYS
                    )
        elif sub == "*ports" and isinstance(value, dict):
            kinds = set(k.value for k in PortKind)
            for kind, desc in value.items():
                if kind not in kinds:
                    found.append(path + "." + kind)
                elif isinstance(desc, dict):
                    for k, v in desc.items():
                        if k not in _PORT_KEYS:
                            found.append("{0}.{1}.{2}".format(path, kind, k))
                        elif k == "capabilities" and isinstance(v, dict):
                            found.extend(
                                "{0}.{1}.capabilities.{2}".format(path, kind, c)
                                for c in v
                                if c not in _CAPABILITY_KEYS
                            )
    return sorted(found)


def _build(data: Mapping[str, Any]) -> RunConfig:
    problems: List[str] = []
    base = RunConfig()
    changes: Dict[str, Any] = {}

    def attempt(key: str, fn: Any) -> None:
        if key not in data:
            return
        try:
            changes[key] = fn(data[key])
        except (LabError, LossError, ValueError, TypeError, KeyError) as e:
            problems.append("{0}: {1}".format(key, e))

    attempt("thresholds", lambda d: Thresholds(**d))
    attempt("loss", _loss)
    attempt("scenario", _scenario)
    attempt(
        "hyperparameters",
        lambda d: {m: Hyperparameters(**p) for (m, p) in d.items()},
    )
    attempt("probability_mode", _probability_mode)
    attempt("idk_templates", _templates)
    attempt("seed", lambda v: _int(v, "seed", 0))
    attempt("workers", _workers)
    attempt("ports", _ports)
    attempt("paths", lambda d: Paths(**d))
    attempt("toy", _toy)
    if problems:
        raise ConfigError(problems)
    return replace(base, **changes)


def _int(value: Any, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValueError("{0} must be an integer ≥ {1}".format(name, minimum))
    return value


def _workers(value: Any) -> int:
    if value == -1:
        return -1
    return _int(value, "workers", 1)


def _loss(value: Any) -> LossSpec:
    if isinstance(value, str):
        return LossSpec.parse(value)
    method = Method(str(value.get("method", "GA")).upper())
    reg_value = str(value.get("regularizer", "none"))
    regularizer = Regularizer.NONE if reg_value.lower() == "none" else Regularizer(reg_value.upper())
    beta = value.get("beta")
    if beta is None and method in (Method.NPO, Method.DPO):
        beta = 0.1
    return LossSpec(
        method=method,
        regularizer=regularizer,
        beta=beta,
        reg_weight=float(value.get("reg_weight", 1.0)),
    )


def _scenario(value: Any) -> str:
    if value != TOY_SCENARIO and value not in SCENARIOS:
        raise ValueError(
            "unknown scenario ‘{0}’ (known: {1})".format(
                value, ", ".join(sorted(list(SCENARIOS) + [TOY_SCENARIO]))
            )
        )
    return str(value)


def _probability_mode(value: Any) -> str:
    if value not in PROBABILITY_MODES:
        raise ValueError("probability_mode must be one of {0}".format(", ".join(PROBABILITY_MODES)))
    return str(value)


def _templates(value: Any) -> Tuple[str, ...]:
    if not isinstance(value, list) or not value or not all(
        isinstance(t, str) and t.strip() for t in value
    ):
        raise ValueError("idk_templates must be a non-empty list of strings")
    return tuple(value)


def _ports(value: Mapping[str, Any]) -> Dict[PortKind, PortDescriptor]:
    ports = default_ports()
    for kind, desc in value.items():
        if isinstance(desc, str):
            desc = {"endpoint": desc}
        try:
            ports[PortKind(kind)] = PortDescriptor.from_dict({"kind": kind, **desc})
        except PortConfigError as e:
            raise ValueError(str(e))
    return ports


def _toy(value: Mapping[str, Any]) -> ToyConfig:
    d = dict(value)
    if "sizes" in d:
        d["sizes"] = CorpusSizes(**d["sizes"])
    if "fe_band" in d:
        (low, high) = d["fe_band"]
        if not 0.0 <= low <= high <= 1.0:
            raise ValueError("fe_band must satisfy 0 ≤ low ≤ high ≤ 1")
        d["fe_band"] = (float(low), float(high))
    if "idk_share" in d:
        share = float(d["idk_share"])
        if not 0.0 <= share <= 1.0:
            raise ValueError("idk_share must lie in [0, 1]")
        d["idk_share"] = share
    if "learning_rates" in d:
        d["learning_rates"] = {**ToyConfig().learning_rates, **d["learning_rates"]}
    return ToyConfig(**d)


def parse_config(
    data: Mapping[str, Any], env: Optional[Mapping[str, str]] = None
) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a JSON object"])
    unknown = unknown_keys(data, _SCHEMA)
    if unknown:
        raise ConfigError(["unknown key ‘{0}’".format(k) for k in unknown])
    config = _build(data)
    env = os.environ if env is None else env
    fixtures = env.get(FIXTURES_ENV)
    if fixtures:
        config = replace(config, fixtures=fixtures)
    return config


def load_config(path: Optional[str], env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Read the configuration file at ‘path’ (defaults when None)."""
    if path is None:
        return parse_config({}, env)
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(["cannot read ‘{0}’: {1}".format(path, e.strerror)])
    except ValueError as e:
        raise ConfigError(["‘{0}’ is not valid JSON: {1}".format(path, e)])
    return parse_config(data, env)


def config_to_dict(config: RunConfig) -> Dict[str, Any]:
    """JSON-ready form of a configuration (as recorded next to run outputs)."""
    return {
        "thresholds": {f.name: getattr(config.thresholds, f.name) for f in fields(Thresholds)},
        "loss": {
            "method": config.loss.method.value,
            "regularizer": config.loss.regularizer.value,
            "beta": config.loss.beta,
            "reg_weight": config.loss.reg_weight,
        },
        "scenario": config.scenario,
        "probability_mode": config.probability_mode,
        "idk_templates": list(config.idk_templates),
        "seed": config.seed,
        "workers": config.workers,
        "ports": {
            k.value: {"endpoint": d.endpoint, "capabilities": d.to_dict()["capabilities"]}
            for (k, d) in sorted(config.ports.items(), key=lambda kv: kv[0].value)
        },
        "toy": {
            "sizes": {f.name: getattr(config.toy.sizes, f.name) for f in fields(CorpusSizes)},
            "max_steps": config.toy.max_steps,
            "fe_band": list(config.toy.fe_band),
            "idk_share": config.toy.idk_share,
            "beta": config.toy.beta,
            "learning_rates": dict(sorted(config.toy.learning_rates.items())),
        },
    }
