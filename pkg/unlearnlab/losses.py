# -*- coding: utf-8 -*-
"""Unlearning objectives over per-token log-probabilities.

Each method loss is oriented so that minimising it unlearns, and the
combined objective is a plain sum of the method loss and the weighted
retain regulariser. Every loss has a companion ``*_grad`` giving the
derivative with respect to each sequence's summed current log-probability
(the derivative is the same for every token of a sequence).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit, rel_entr

from unlearnlab.util import LabError

DEFAULT_IDK_TEMPLATES = (
    "I don't know.",
    "I'm not sure about that.",
    "I have no information on that.",
    "I can't answer that question.",
    "That is something I don't know about.",
)


class LossError(LabError):
    pass


class EmptyBatch(LossError):
    pass


class WrongRole(LossError):
    pass


class MissingReference(LossError):
    pass


class LengthMismatch(LossError):
    pass


class NotNormalized(LossError):
    pass


class SupportViolation(LossError):
    pass


class InvalidLossSpec(LossError):
    pass


class AnswerRole(str, Enum):
    FORGET_ANSWER = "forget_answer"
    IDK_ANSWER = "idk_answer"
    RETAIN_ANSWER = "retain_answer"


class Method(str, Enum):
    GA = "GA"
    NPO = "NPO"
    DPO = "DPO"
    IDK = "IDK"


class Regularizer(str, Enum):
    NONE = "none"
    GD = "GD"
    KL = "KL"


@dataclass(frozen=True)
class ScoredSequence:
    logprob_current: Tuple[float, ...]
    logprob_ref: Optional[Tuple[float, ...]] = None
    answer_role: AnswerRole = AnswerRole.FORGET_ANSWER

    def __post_init__(self) -> None:
        if not self.logprob_current:
            raise LossError("a scored sequence needs at least one token")
        if self.logprob_ref is not None and len(self.logprob_ref) != len(
            self.logprob_current
        ):
            raise LengthMismatch("current and reference log-probs differ in length")
        for lp in self.logprob_current + (self.logprob_ref or ()):
            if lp > 0.0:
                raise LossError("log-probability {0} is positive".format(lp))

    def current_total(self) -> float:
        return math.fsum(self.logprob_current)

    def ref_total(self) -> float:
        if self.logprob_ref is None:
            raise MissingReference("sequence has no reference log-probs")
        return math.fsum(self.logprob_ref)

    def ratio(self) -> float:
        """Log-likelihood ratio of the current against the reference model."""
        return self.current_total() - self.ref_total()


@dataclass(frozen=True)
class LossSpec:
    method: Method
    regularizer: Regularizer = Regularizer.NONE
    beta: Optional[float] = None
    reg_weight: float = 1.0

    def __post_init__(self) -> None:
        needs_beta = self.method in (Method.NPO, Method.DPO)
        if needs_beta and (self.beta is None or self.beta <= 0.0):
            raise InvalidLossSpec(
                "method ‘{0}’ needs a positive beta".format(self.method.value)
            )
        if not needs_beta and self.beta is not None:
            raise InvalidLossSpec(
                "method ‘{0}’ takes no beta".format(self.method.value)
            )
        if self.reg_weight <= 0.0:
            raise InvalidLossSpec("reg_weight must be positive")

    @property
    def label(self) -> str:
        if self.regularizer == Regularizer.NONE:
            return self.method.value
        return "{0}+{1}".format(self.method.value, self.regularizer.value)

    @classmethod
    def parse(
        cls, label: str, beta: Optional[float] = 0.1, reg_weight: float = 1.0
    ) -> LossSpec:
        """Parse ‘GA’, ‘NPO+KL’ and the like; ‘beta’ only applies to the
        methods that take one."""
        (name, _, reg) = label.partition("+")
        try:
            method = Method(name.strip().upper())
            regularizer = Regularizer(reg.strip().upper()) if reg else Regularizer.NONE
        except ValueError:
            raise InvalidLossSpec("unknown objective ‘{0}’".format(label))
        return cls(
            method=method,
            regularizer=regularizer,
            beta=beta if method in (Method.NPO, Method.DPO) else None,
            reg_weight=reg_weight,
        )


@dataclass(frozen=True)
class DistributionBatch:
    """Per-position next-token distributions of the current and the
    reference model, one row per position."""

    current: np.ndarray
    ref: np.ndarray


Batch = Sequence[ScoredSequence]


def _check(batch: Batch, role: Optional[AnswerRole], what: str) -> None:
    if not batch:
        raise EmptyBatch("{0} needs a non-empty batch".format(what))
    if role is not None:
        for s in batch:
            if s.answer_role != role:
                raise WrongRole(
                    "{0} expects ‘{1}’ sequences, got ‘{2}’".format(
                        what, role.value, s.answer_role.value
                    )
                )


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def ga_loss(batch: Batch) -> float:
    _check(batch, AnswerRole.FORGET_ANSWER, "GA")
    return _mean([s.current_total() for s in batch])


def ga_grad(batch: Batch) -> List[float]:
    _check(batch, AnswerRole.FORGET_ANSWER, "GA")
    return [1.0 / len(batch)] * len(batch)


def _check_beta(beta: float) -> None:
    if beta <= 0.0:
        raise InvalidLossSpec("beta must be positive, got {0}".format(beta))


def npo_loss(batch: Batch, beta: float) -> float:
    _check(batch, AnswerRole.FORGET_ANSWER, "NPO")
    _check_beta(beta)
    return -(2.0 / beta) * _mean([float(log_expit(-beta * s.ratio())) for s in batch])


def npo_grad(batch: Batch, beta: float) -> List[float]:
    _check(batch, AnswerRole.FORGET_ANSWER, "NPO")
    _check_beta(beta)
    n = len(batch)
    return [2.0 * float(expit(beta * s.ratio())) / n for s in batch]


def _margins(neg: Batch, pos: Batch, beta: float) -> List[float]:
    if not neg or not pos:
        raise EmptyBatch("DPO needs non-empty batches")
    if len(neg) != len(pos):
        raise LengthMismatch(
            "DPO needs one positive per negative ({0} vs {1})".format(len(pos), len(neg))
        )
    _check_beta(beta)
    return [beta * (p.ratio() - q.ratio()) for (q, p) in zip(neg, pos)]


def dpo_loss(neg: Batch, pos: Batch, beta: float) -> float:
    return -_mean([float(log_expit(m)) for m in _margins(neg, pos, beta)])


def dpo_grad(neg: Batch, pos: Batch, beta: float) -> Tuple[List[float], List[float]]:
    """Derivatives for the negative and the positive sequences."""
    margins = _margins(neg, pos, beta)
    n = len(margins)
    weights = [beta * float(expit(-m)) / n for m in margins]
    return ([w for w in weights], [-w for w in weights])


def idk_loss(batch: Batch) -> float:
    _check(batch, AnswerRole.IDK_ANSWER, "IDK")
    return -_mean([s.current_total() for s in batch])


def idk_grad(batch: Batch) -> List[float]:
    _check(batch, AnswerRole.IDK_ANSWER, "IDK")
    return [-1.0 / len(batch)] * len(batch)


def gd_reg(batch: Batch) -> float:
    _check(batch, AnswerRole.RETAIN_ANSWER, "GD")
    return -_mean([s.current_total() for s in batch])


def gd_grad(batch: Batch) -> List[float]:
    _check(batch, AnswerRole.RETAIN_ANSWER, "GD")
    return [-1.0 / len(batch)] * len(batch)


def _distributions(
    dist_current: Sequence[Sequence[float]], dist_ref: Sequence[Sequence[float]]
) -> Tuple[np.ndarray, np.ndarray]:
    p = np.atleast_2d(np.asarray(dist_current, dtype=float))
    q = np.atleast_2d(np.asarray(dist_ref, dtype=float))
    if p.size == 0:
        raise EmptyBatch("KL needs at least one position")
    if p.shape != q.shape:
        raise LengthMismatch(
            "distribution shapes differ: {0} vs {1}".format(p.shape, q.shape)
        )
    for name, d in (("current", p), ("reference", q)):
        if np.any(d < 0.0) or np.any(np.abs(d.sum(axis=1) - 1.0) > 1e-9):
            raise NotNormalized("{0} distributions must sum to 1".format(name))
    if np.any((p > 0.0) & (q == 0.0)):
        raise SupportViolation("reference assigns zero mass where current does not")
    return (p, q)


def kl_reg(
    dist_current: Sequence[Sequence[float]], dist_ref: Sequence[Sequence[float]]
) -> float:
    """Mean over positions of KL(current ‖ reference)."""
    (p, q) = _distributions(dist_current, dist_ref)
    per_position = rel_entr(p, q).sum(axis=1)
    return max(_mean([float(x) for x in per_position]), 0.0)


def kl_grad_logits(
    dist_current: Sequence[Sequence[float]], dist_ref: Sequence[Sequence[float]]
) -> np.ndarray:
    """Derivative of kl_reg with respect to the logits behind each row of
    ‘dist_current’ (a softmax per position)."""
    (p, q) = _distributions(dist_current, dist_ref)
    per_position = rel_entr(p, q).sum(axis=1, keepdims=True)
    safe = np.where(p > 0.0, p, 1.0)
    log_ratio = np.where(p > 0.0, np.log(safe) - np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    return p * (log_ratio - per_position) / p.shape[0]


RetainInput = Union[Batch, DistributionBatch, None]


def _regularizer(spec: LossSpec, retain: RetainInput) -> float:
    if spec.regularizer == Regularizer.NONE:
        return 0.0
    if retain is None:
        raise EmptyBatch("regulariser ‘{0}’ needs retain data".format(spec.regularizer.value))
    if spec.regularizer == Regularizer.KL:
        if not isinstance(retain, DistributionBatch):
            raise LossError("KL regularisation needs a DistributionBatch")
        return kl_reg(retain.current, retain.ref)
    if isinstance(retain, DistributionBatch):
        raise LossError("GD regularisation needs scored retain sequences")
    return gd_reg(retain)


def method_loss(spec: LossSpec, forget_batch: Batch, idk_batch: Optional[Batch] = None) -> float:
    if spec.method == Method.GA:
        return ga_loss(forget_batch)
    if spec.method == Method.NPO:
        return npo_loss(forget_batch, spec.beta)  # type: ignore
    if spec.method == Method.IDK:
        return idk_loss(forget_batch)
    if idk_batch is None:
        raise EmptyBatch("DPO needs rejection-template positives")
    return dpo_loss(forget_batch, idk_batch, spec.beta)  # type: ignore


def combined_objective(
    spec: LossSpec,
    forget_batch: Batch,
    retain_batch: RetainInput = None,
    idk_batch: Optional[Batch] = None,
) -> float:
    """Method loss plus reg_weight times the retain regulariser.

    For IDK the forget batch holds the rejection-template targets; for DPO
    ‘idk_batch’ holds the positives aligned with the forget negatives.
    """
    return method_loss(spec, forget_batch, idk_batch) + spec.reg_weight * _regularizer(
        spec, retain_batch
    )
