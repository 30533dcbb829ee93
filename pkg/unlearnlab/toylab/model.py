# -*- coding: utf-8 -*-
"""Additive-logit softmax model over (template, entity) prompts.

The logits of a prompt are ``u[t] + v[e] + b``: one row per template, one
row per entity and a shared bias. Questions built from the same template
share a parameter row, which is what couples syntactically similar facts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from unlearnlab.logger import StageLogger
from unlearnlab.util import LabError


class NonConvergence(LabError):
    pass


class EmptyProbe(LabError):
    pass


class FactIndex(NamedTuple):
    templates: np.ndarray
    entities: np.ndarray
    answers: np.ndarray

    def __len__(self) -> int:
        return len(self.answers)


def index_facts(facts: Sequence[object]) -> FactIndex:
    """Integer arrays of anything carrying template_id, entity_id and
    answer_token attributes."""
    return FactIndex(
        templates=np.array([f.template_id for f in facts], dtype=int),  # type: ignore
        entities=np.array([f.entity_id for f in facts], dtype=int),  # type: ignore
        answers=np.array([f.answer_token for f in facts], dtype=int),  # type: ignore
    )


def onehot(tokens: np.ndarray, vocab: int) -> np.ndarray:
    out = np.zeros((len(tokens), vocab))
    out[np.arange(len(tokens)), tokens] = 1.0
    return out


@dataclass
class Gradients:
    u: np.ndarray
    v: np.ndarray
    b: np.ndarray

    def __add__(self, other: Gradients) -> Gradients:
        return Gradients(self.u + other.u, self.v + other.v, self.b + other.b)

    def scaled(self, c: float) -> Gradients:
        return Gradients(self.u * c, self.v * c, self.b * c)

    def norm(self) -> float:
        """Frobenius norm over all parameter blocks together."""
        return math.sqrt(
            float(np.sum(self.u ** 2) + np.sum(self.v ** 2) + np.sum(self.b ** 2))
        )


class ToyModel(object):
    def __init__(self, u: np.ndarray, v: np.ndarray, b: np.ndarray) -> None:
        if u.shape[1] != v.shape[1] or u.shape[1] != b.shape[0]:
            raise LabError("parameter blocks disagree on the vocabulary size")
        self.u = u
        self.v = v
        self.b = b

    @classmethod
    def random(
        cls, n_templates: int, n_entities: int, vocab: int, seed: int, scale: float = 0.1
    ) -> ToyModel:
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(0.0, scale, (n_templates, vocab)),
            rng.normal(0.0, scale, (n_entities, vocab)),
            rng.normal(0.0, scale, vocab),
        )

    @property
    def n_templates(self) -> int:
        return self.u.shape[0]

    @property
    def n_entities(self) -> int:
        return self.v.shape[0]

    @property
    def vocab(self) -> int:
        return self.b.shape[0]

    def copy(self) -> ToyModel:
        return ToyModel(self.u.copy(), self.v.copy(), self.b.copy())

    def logits(self, templates: np.ndarray, entities: np.ndarray) -> np.ndarray:
        return self.u[templates] + self.v[entities] + self.b

    def probabilities(self, templates: np.ndarray, entities: np.ndarray) -> np.ndarray:
        return softmax(self.logits(templates, entities), axis=1)

    def log_probabilities(self, templates: np.ndarray, entities: np.ndarray) -> np.ndarray:
        return log_softmax(self.logits(templates, entities), axis=1)

    def predict(self, templates: np.ndarray, entities: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(templates, entities), axis=1)

    def param_grads(
        self, templates: np.ndarray, entities: np.ndarray, logit_grads: np.ndarray
    ) -> Gradients:
        """Chain per-prompt logit gradients into the parameter blocks."""
        gu = np.zeros_like(self.u)
        gv = np.zeros_like(self.v)
        np.add.at(gu, templates, logit_grads)
        np.add.at(gv, entities, logit_grads)
        return Gradients(gu, gv, logit_grads.sum(axis=0))

    def stepped(self, grads: Gradients, lr: float) -> ToyModel:
        """A copy moved by one descent step of size ‘lr’."""
        model = ToyModel(self.u - lr * grads.u, self.v - lr * grads.v, self.b - lr * grads.b)
        model.check()
        return model

    def check(self) -> None:
        for block in (self.u, self.v, self.b):
            if not np.all(np.isfinite(block)):
                raise LabError("toy model parameters diverged")


def nll(model: ToyModel, idx: FactIndex) -> float:
    lp = model.log_probabilities(idx.templates, idx.entities)
    return -float(np.mean(lp[np.arange(len(idx)), idx.answers]))


def nll_grads(model: ToyModel, idx: FactIndex) -> Gradients:
    p = model.probabilities(idx.templates, idx.entities)
    g = (p - onehot(idx.answers, model.vocab)) / len(idx)
    return model.param_grads(idx.templates, idx.entities, g)


def gradient_norm_probe(
    model: ToyModel, probe_sets: Mapping[str, Sequence[object]]
) -> Dict[str, float]:
    """Frobenius norm of the mean-NLL gradient of each probe set."""
    norms: Dict[str, float] = {}
    for name, facts in probe_sets.items():
        if not facts:
            raise EmptyProbe("probe set ‘{0}’ is empty".format(name))
        norms[name] = nll_grads(model, index_facts(facts)).norm()
    return norms


def fit_initial(
    model: ToyModel,
    facts: Sequence[object],
    lr: float = 1.0,
    epochs: int = 20000,
    target_probability: float = 0.95,
    history: Optional[List[float]] = None,
    logger: Optional[StageLogger] = None,
) -> ToyModel:
    """Full-batch cross-entropy descent until every answer is the argmax
    and the mean answer probability reaches ‘target_probability’.

    Losses before each update are appended to ‘history’ when given.
    """
    if not facts:
        raise LabError("cannot fit an empty corpus")
    idx = index_facts(facts)
    rows = np.arange(len(idx))
    target = onehot(idx.answers, model.vocab)
    model = model.copy()
    for epoch in range(epochs + 1):
        p = model.probabilities(idx.templates, idx.entities)
        answer_p = p[rows, idx.answers]
        if history is not None:
            history.append(-float(np.mean(np.log(answer_p))))
        correct = np.argmax(p, axis=1) == idx.answers
        if correct.all() and answer_p.mean() >= target_probability:
            if logger:
                logger.log(
                    "fitted {0} facts in {1} epochs (mean p = {2:.3f})".format(
                        len(idx), epoch, answer_p.mean()
                    )
                )
            return model
        if epoch == epochs:
            break
        grads = model.param_grads(idx.templates, idx.entities, (p - target) / len(idx))
        model = model.stepped(grads, lr)
    raise NonConvergence(
        "no fit after {0} epochs: {1} of {2} facts correct, mean p = {3:.3f}".format(
            epochs, int(correct.sum()), len(idx), answer_p.mean()
        )
    )
