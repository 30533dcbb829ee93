# -*- coding: utf-8 -*-
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from unlearnlab import losses
from unlearnlab.losses import (
    AnswerRole,
    DistributionBatch,
    LossSpec,
    Method,
    Regularizer,
    ScoredSequence,
)
from unlearnlab.logger import StageLogger
from unlearnlab.metrics import MetricVector, Role, aggregate, relative_utility_drop
from unlearnlab.toylab.model import (
    FactIndex,
    Gradients,
    ToyModel,
    gradient_norm_probe,
    index_facts,
    onehot,
)
from unlearnlab.util import LabError, canonical_json


@dataclass
class TraceStep:
    step: int
    loss: float
    lr: float
    forget_efficacy: float
    utility: Dict[str, float]
    grad_norms: Dict[str, float]

    def to_dict(self) -> Dict[str, object]:
        return {
            "step": self.step,
            "loss": self.loss,
            "lr": self.lr,
            "forget_efficacy": self.forget_efficacy,
            "utility": self.utility,
            "grad_norms": self.grad_norms,
        }


@dataclass
class RunTrace:
    """Step 0 holds the state at entry; steps 1.. follow each update."""

    label: str
    steps: List[TraceStep] = field(default_factory=list)
    reached: bool = False

    def rud(self) -> Dict[str, float]:
        first = self.steps[0].utility
        last = self.steps[-1].utility
        return {k: relative_utility_drop(first[k], last[k]) for k in sorted(first)}

    def to_jsonl(self) -> str:
        return "".join(canonical_json(s.to_dict()) + "\n" for s in self.steps)


class BandNeverReached(LabError):
    def __init__(self, msg: str, model: ToyModel, trace: RunTrace) -> None:
        LabError.__init__(self, msg)
        self.model = model
        self.trace = trace


def fact_metrics(model: ToyModel, facts: Sequence[object]) -> List[MetricVector]:
    """Top-1 accuracy (the ROUGE-L recall of a one-token answer) and
    answer probability of every fact."""
    idx = index_facts(facts)
    p = model.probabilities(idx.templates, idx.entities)
    hit = np.argmax(p, axis=1) == idx.answers
    answer_p = p[np.arange(len(idx)), idx.answers]
    return [
        MetricVector(rouge_l_recall=float(h), probability=min(float(q), 1.0))
        for (h, q) in zip(hit, answer_p)
    ]


def forget_efficacy(model: ToyModel, forget: Sequence[object]) -> float:
    return aggregate(fact_metrics(model, forget), Role.FORGET)


def utility(model: ToyModel, facts: Sequence[object]) -> float:
    return aggregate(fact_metrics(model, facts), Role.RETAIN)


def _sequences(logp: np.ndarray, ref: np.ndarray, role: AnswerRole) -> List[ScoredSequence]:
    return [
        ScoredSequence((min(float(c), 0.0),), (min(float(r), 0.0),), role)
        for (c, r) in zip(logp, ref)
    ]


def objective(
    model: ToyModel,
    ref: ToyModel,
    spec: LossSpec,
    forget: FactIndex,
    retain: Optional[FactIndex],
    idk_token: int,
) -> Tuple[float, Gradients]:
    """Value and parameter gradient of the combined unlearning objective."""
    rows = np.arange(len(forget))
    p = model.probabilities(forget.templates, forget.entities)
    logp = model.log_probabilities(forget.templates, forget.entities)
    logp_ref = ref.log_probabilities(forget.templates, forget.entities)
    idk = np.full(len(forget), idk_token)
    towards_answer = onehot(forget.answers, model.vocab) - p
    towards_idk = onehot(idk, model.vocab) - p

    answer_seqs = _sequences(
        logp[rows, forget.answers],
        logp_ref[rows, forget.answers],
        AnswerRole.FORGET_ANSWER,
    )
    idk_seqs = _sequences(logp[rows, idk], logp_ref[rows, idk], AnswerRole.IDK_ANSWER)

    if spec.method == Method.GA:
        forget_batch, idk_batch = answer_seqs, None
        g = np.array(losses.ga_grad(answer_seqs))[:, None] * towards_answer
    elif spec.method == Method.NPO:
        forget_batch, idk_batch = answer_seqs, None
        g = np.array(losses.npo_grad(answer_seqs, spec.beta))[:, None] * towards_answer  # type: ignore
    elif spec.method == Method.IDK:
        forget_batch, idk_batch = idk_seqs, None
        g = np.array(losses.idk_grad(idk_seqs))[:, None] * towards_idk
    else:
        forget_batch, idk_batch = answer_seqs, idk_seqs
        (g_neg, g_pos) = losses.dpo_grad(answer_seqs, idk_seqs, spec.beta)  # type: ignore
        g = np.array(g_neg)[:, None] * towards_answer + np.array(g_pos)[:, None] * towards_idk
    grads = model.param_grads(forget.templates, forget.entities, g)

    retain_input: losses.RetainInput = None
    if spec.regularizer != Regularizer.NONE:
        if retain is None or len(retain) == 0:
            raise losses.EmptyBatch("regularisation needs retain facts")
        rrows = np.arange(len(retain))
        rp = model.probabilities(retain.templates, retain.entities)
        if spec.regularizer == Regularizer.GD:
            rlogp = model.log_probabilities(retain.templates, retain.entities)
            rlogp_ref = ref.log_probabilities(retain.templates, retain.entities)
            seqs = _sequences(
                rlogp[rrows, retain.answers],
                rlogp_ref[rrows, retain.answers],
                AnswerRole.RETAIN_ANSWER,
            )
            retain_input = seqs
            rg = np.array(losses.gd_grad(seqs))[:, None] * (
                onehot(retain.answers, model.vocab) - rp
            )
        else:
            rq = ref.probabilities(retain.templates, retain.entities)
            retain_input = DistributionBatch(rp, rq)
            rg = losses.kl_grad_logits(rp, rq)
        grads = grads + model.param_grads(
            retain.templates, retain.entities, spec.reg_weight * rg
        )
    value = losses.combined_objective(spec, forget_batch, retain_input, idk_batch)
    return (value, grads)


def idk_share(model: ToyModel, facts: Sequence[object], idk_token: int) -> float:
    """Fraction of ‘facts’ whose most likely next token is the IDK token."""
    idx = index_facts(facts)
    return float(np.mean(model.predict(idx.templates, idx.entities) == idk_token))


def shortlist_grads(model: ToyModel, facts: FactIndex, idk_token: int) -> Gradients:
    """Gradient of the mean of -log(p(answer) + p(IDK)) over ‘facts’.

    A descent step moves probability from every other token onto the
    answer and the IDK token while keeping the ratio of those two fixed.
    """
    rows = np.arange(len(facts))
    p = model.probabilities(facts.templates, facts.entities)
    q = np.zeros_like(p)
    q[rows, facts.answers] = p[rows, facts.answers]
    q[rows, idk_token] += p[rows, idk_token]
    q /= q.sum(axis=1, keepdims=True)
    return model.param_grads(facts.templates, facts.entities, (p - q) / len(facts))


def _step_in_band(
    current: ToyModel,
    grads: Gradients,
    lr: float,
    forget_facts: Sequence[object],
    band: Tuple[float, float],
) -> Optional[Tuple[ToyModel, float]]:
    """The descent step of size at most ‘lr’ that keeps forget efficacy
    inside ‘band’, or None when only a vanishing one does."""
    (low, high) = band

    def inside(step_lr: float) -> bool:
        return low <= forget_efficacy(current.stepped(grads, step_lr), forget_facts) <= high

    step_lr = lr
    if not inside(lr):
        (lo, hi) = (0.0, lr)
        for _ in range(60):
            mid = (lo + hi) / 2
            if inside(mid):
                lo = mid
            else:
                hi = mid
        step_lr = lo
    if step_lr < lr * 1e-3:
        return None
    return (current.stepped(grads, step_lr), step_lr)


def unlearn(
    model: ToyModel,
    spec: LossSpec,
    forget_facts: Sequence[object],
    retain_facts: Sequence[object] = (),
    lr: float = 5.0,
    max_steps: int = 500,
    fe_band: Tuple[float, float] = (0.65, 0.75),
    eval_sets: Optional[Mapping[str, Sequence[object]]] = None,
    probe_sets: Optional[Mapping[str, Sequence[object]]] = None,
    idk_token: Optional[int] = None,
    idk_target: float = 0.0,
    logger: Optional[StageLogger] = None,
) -> Tuple[ToyModel, RunTrace]:
    """Descend on the combined objective until forget efficacy enters
    ‘fe_band’.

    When a full step would carry forget efficacy past the band, the step
    size is halved until it lands inside. The reference model is the one
    passed in. Every trace row holds the objective at the state it
    describes. Raises BandNeverReached, carrying the partial model and
    trace, when ‘max_steps’ updates do not reach the band.

    IDK runs with a positive ‘idk_target’ do not stop at the band edge:
    they keep descending the IDK objective of the forget facts still
    answered, with steps cut back to stay inside the band, until that
    share of forget facts has the IDK token as argmax. When no such step
    fits, the declined facts take a ‘shortlist_grads’ step instead, which
    returns probability to their answers and lowers forget efficacy. The
    run stops short with a warning when neither step fits or ‘max_steps’
    is used up.
    """
    (low, high) = fe_band
    ref = model.copy()
    forget = index_facts(forget_facts)
    retain = index_facts(retain_facts) if retain_facts else None
    eval_sets = eval_sets or {}
    probe_sets = probe_sets or {}
    if idk_token is None:
        idk_token = model.vocab - 1
    trace = RunTrace(label=spec.label)

    def record(step: int, current: ToyModel, step_lr: float) -> Tuple[float, Gradients]:
        (loss, grads) = objective(current, ref, spec, forget, retain, idk_token)  # type: ignore
        trace.steps.append(
            TraceStep(
                step=step,
                loss=loss,
                lr=step_lr,
                forget_efficacy=forget_efficacy(current, forget_facts),
                utility={k: utility(current, v) for (k, v) in sorted(eval_sets.items())},
                grad_norms=gradient_norm_probe(current, dict(sorted(probe_sets.items()))),
            )
        )
        return (loss, grads)

    (_, grads) = record(0, model, 0.0)
    fe = trace.steps[-1].forget_efficacy
    current = model.copy()
    step = 0
    if not low <= fe <= high and max_steps > 0:
        for step in range(1, max_steps + 1):
            step_lr = lr
            trial = current.stepped(grads, step_lr)
            fe = forget_efficacy(trial, forget_facts)
            if fe > high:
                (lo, hi) = (0.0, lr)
                for _ in range(60):
                    step_lr = (lo + hi) / 2
                    trial = current.stepped(grads, step_lr)
                    fe = forget_efficacy(trial, forget_facts)
                    if fe < low:
                        lo = step_lr
                    elif fe > high:
                        hi = step_lr
                    else:
                        break
                else:
                    step_lr = lo
                    trial = current.stepped(grads, step_lr)
                    fe = forget_efficacy(trial, forget_facts)
            current = trial
            (_, grads) = record(step, current, step_lr)
            if low <= fe <= high:
                break
    trace.reached = low <= fe <= high
    if not trace.reached:
        if max_steps == 0:
            return (current, trace)
        raise BandNeverReached(
            "{0} did not reach forget efficacy {1:.2f}-{2:.2f} in {3} steps (last {4:.3f})".format(
                spec.label, low, high, max_steps, fe
            ),
            current,
            trace,
        )
    if logger and step > 0:
        logger.log("{0}: FE {1:.3f} after {2} steps".format(spec.label, fe, step))

    if spec.method != Method.IDK or idk_target <= 0.0:
        return (current, trace)
    while idk_share(current, forget_facts, idk_token) < idk_target:
        if step >= max_steps:
            break
        declined = current.predict(forget.templates, forget.entities) == idk_token
        answered = [f for (f, d) in zip(forget_facts, declined) if not d]
        (_, flip_grads) = objective(
            current, ref, spec, index_facts(answered), retain, idk_token
        )
        moved = _step_in_band(current, flip_grads, lr, forget_facts, fe_band)
        if moved is None and declined.any():
            held = index_facts([f for (f, d) in zip(forget_facts, declined) if d])
            moved = _step_in_band(
                current, shortlist_grads(current, held, idk_token), lr, forget_facts, fe_band
            )
        if moved is None:
            break
        step += 1
        (current, step_lr) = moved
        record(step, current, step_lr)
    else:
        if logger and step > 0:
            logger.log(
                "{0}: IDK is the argmax on {1:.0%} of forget facts after {2} steps".format(
                    spec.label, idk_share(current, forget_facts, idk_token), step
                )
            )
        return (current, trace)
    if logger:
        logger.warn(
            "{0}: IDK is the argmax on {1:.0%} of forget facts, short of {2:.0%}".format(
                spec.label, idk_share(current, forget_facts, idk_token), idk_target
            )
        )
    return (current, trace)
