# -*- coding: utf-8 -*-
"""Per-example metrics and the utility aggregates built on them.

Every example is scored on up to four components (ROUGE-L recall, answer
probability, floored cosine similarity and entailment). Model utility is
the mean over examples of the mean of the components present; forget
efficacy is one minus the same aggregate taken on the forget set.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
)

import numpy as np

from unlearnlab.clients import Embedder, NLIJudge, NLILabel
from unlearnlab.dataset import EvalRecord, QAPair, SetKind
from unlearnlab.parallel import run_tasks
from unlearnlab.util import LabError


class MetricError(LabError):
    pass


class EmptyReference(MetricError):
    pass


class EmptySequence(MetricError):
    pass


class OutOfRange(MetricError):
    pass


class ZeroVector(MetricError):
    pass


class DimensionMismatch(MetricError):
    pass


class EmptySet(MetricError):
    pass


class ZeroBaseline(MetricError):
    pass


class GroupMismatch(MetricError):
    pass


class MissingRecord(MetricError):
    pass


class Role(str, Enum):
    RETAIN = "retain"
    FORGET = "forget"


class GroupKey(str, Enum):
    SET_KIND = "set_kind"
    CATEGORY = "category"
    PARAPHRASE_GROUP = "paraphrase_group"


ARITHMETIC = "arithmetic"
GEOMETRIC = "geometric"
PROBABILITY_MODES = (ARITHMETIC, GEOMETRIC)


@dataclass(frozen=True)
class MetricVector:
    """Metric components of one example; a component is None when it was
    not measured (e.g. no embedder was available)."""

    rouge_l_recall: Optional[float] = None
    probability: Optional[float] = None
    cosine_sim: Optional[float] = None
    entailment: Optional[float] = None

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise OutOfRange("{0} = {1} lies outside [0, 1]".format(f.name, value))
        if self.entailment not in (None, 0.0, 1.0):
            raise OutOfRange("entailment must be 0 or 1")

    def present(self) -> List[float]:
        return [
            getattr(self, f.name)
            for f in fields(self)
            if getattr(self, f.name) is not None
        ]

    def mean(self) -> float:
        values = self.present()
        if not values:
            raise EmptySet("metric vector has no measured component")
        return math.fsum(values) / len(values)

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_PUNCT_RE = re.compile(r"[^\w\s]")


def tokenize(text: str) -> List[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return _PUNCT_RE.sub("", text.lower()).split()


def rouge_l_recall(generated: Sequence[str], reference: Sequence[str]) -> float:
    if not reference:
        raise EmptyReference("ROUGE-L needs a non-empty reference")
    prev = [0] * (len(reference) + 1)
    for g in generated:
        row = [0]
        for j, r in enumerate(reference):
            row.append(prev[j] + 1 if g == r else max(prev[j + 1], row[j]))
        prev = row
    return prev[-1] / len(reference)


def answer_probability(token_probs: Sequence[float], mode: str = ARITHMETIC) -> float:
    """Mean per-token probability of the reference answer.

    ‘arithmetic’ averages the probabilities; ‘geometric’ is the
    length-normalised sequence likelihood.
    """
    if not token_probs:
        raise EmptySequence("no token probabilities to average")
    for p in token_probs:
        if not 0.0 <= p <= 1.0:
            raise OutOfRange("token probability {0} lies outside [0, 1]".format(p))
    if mode == ARITHMETIC:
        return math.fsum(token_probs) / len(token_probs)
    if mode == GEOMETRIC:
        if min(token_probs) == 0.0:
            return 0.0
        return math.exp(math.fsum(math.log(p) for p in token_probs) / len(token_probs))
    raise MetricError("unknown probability mode ‘{0}’".format(mode))


def cosine_floor(e1: Sequence[float], e2: Sequence[float]) -> float:
    a = np.asarray(e1, dtype=float)
    b = np.asarray(e2, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(
            "cannot compare embeddings of shape {0} and {1}".format(a.shape, b.shape)
        )
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(min(max(np.dot(a, b) / (na * nb), 0.0), 1.0))


def entailment_score(generation: str, reference: str, nli: NLIJudge) -> float:
    """1 when the reference entails the generation, 0 otherwise (neutral
    included)."""
    return 1.0 if nli.nli(reference, generation) == NLILabel.ENTAILMENT else 0.0


def aggregate(examples: Sequence[MetricVector], role: Role = Role.RETAIN) -> float:
    if not examples:
        raise EmptySet("cannot aggregate an empty set of examples")
    m = math.fsum(e.mean() for e in examples) / len(examples)
    return 1.0 - m if role == Role.FORGET else m


def relative_utility_drop(mu_before: float, mu_after: float) -> float:
    """Percent change of utility; negative means utility was lost."""
    if mu_before <= 0.0:
        raise ZeroBaseline("utility before unlearning must be positive")
    return (mu_after - mu_before) / mu_before * 100.0


class ScoredExample(NamedTuple):
    pair: QAPair
    vector: MetricVector


class _ScoreTask(NamedTuple):
    name: str
    pair: QAPair


def _index(log: Optional[Sequence[EvalRecord]]) -> Dict[str, EvalRecord]:
    return {} if log is None else {r.id: r for r in log}


def score_records(
    dataset: Sequence[QAPair],
    after_log: Sequence[EvalRecord],
    before_log: Optional[Sequence[EvalRecord]] = None,
    embedder: Optional[Embedder] = None,
    nli: Optional[NLIJudge] = None,
    probability_mode: str = ARITHMETIC,
    nr_workers: int = 1,
) -> List[ScoredExample]:
    """Score every dataset record against its evaluation-log entry.

    Cosine similarity compares the generation before unlearning with the
    one after it, using embeddings from the logs when both carry one and
    the embedder otherwise. Entailment comes from a logged label or the
    NLI judge. Components without a source stay unmeasured.
    """
    after = _index(after_log)
    before = _index(before_log)
    missing = [p.id for p in dataset if p.id not in after]
    if missing:
        raise MissingRecord(
            "evaluation log lacks {0} record(s): {1}".format(
                len(missing), ", ".join(missing[:5])
            )
        )

    def score(task: _ScoreTask) -> ScoredExample:
        pair = task.pair
        rec = after[pair.id]
        rouge = rouge_l_recall(tokenize(rec.generation), tokenize(pair.answer) or [pair.answer])
        prob = (
            answer_probability(rec.token_probs, probability_mode)
            if rec.token_probs
            else None
        )
        cosine: Optional[float] = None
        old = before.get(pair.id)
        if old is not None:
            if not old.generation.strip() or not rec.generation.strip():
                cosine = 0.0
            elif old.embedding is not None and rec.embedding is not None:
                cosine = cosine_floor(old.embedding, rec.embedding)
            elif embedder is not None:
                cosine = cosine_floor(
                    embedder.embed(old.generation), embedder.embed(rec.generation)
                )
        entail: Optional[float] = None
        if rec.nli_label is not None:
            entail = 1.0 if rec.nli_label == NLILabel.ENTAILMENT.value else 0.0
        elif nli is not None:
            entail = entailment_score(rec.generation, pair.answer, nli)
        return ScoredExample(
            pair, MetricVector(rouge, prob, cosine, entail)
        )

    return run_tasks(nr_workers, [_ScoreTask(p.id, p) for p in dataset], score)


@dataclass
class SetSummary:
    count: int
    components: Dict[str, Optional[float]]
    mu: float

    def to_dict(self) -> Dict[str, object]:
        return {"count": self.count, "components": self.components, "mu": self.mu}


@dataclass
class UtilityReport:
    model_utility: float
    forget_efficacy: Optional[float] = None
    per_set: Dict[str, SetSummary] = field(default_factory=dict)
    per_category: Dict[str, float] = field(default_factory=dict)
    rud: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "model_utility": self.model_utility,
            "forget_efficacy": self.forget_efficacy,
            "per_set": {k: v.to_dict() for (k, v) in sorted(self.per_set.items())},
            "per_category": dict(sorted(self.per_category.items())),
            "rud": dict(sorted(self.rud.items())),
        }


def _component_means(vectors: Sequence[MetricVector]) -> Dict[str, Optional[float]]:
    out: Dict[str, Optional[float]] = {}
    for f in fields(MetricVector):
        values = [getattr(v, f.name) for v in vectors if getattr(v, f.name) is not None]
        out[f.name] = math.fsum(values) / len(values) if values else None
    return out


def _group(
    scored: Iterable[ScoredExample], key: Callable[[QAPair], Optional[str]]
) -> Dict[str, List[ScoredExample]]:
    groups: Dict[str, List[ScoredExample]] = {}
    for s in scored:
        k = key(s.pair)
        if k is not None:
            groups.setdefault(k, []).append(s)
    return groups


def build_report(
    scored: Sequence[ScoredExample], before: Optional[UtilityReport] = None
) -> UtilityReport:
    retain = [s.vector for s in scored if s.pair.set_kind != SetKind.FORGET]
    forget = [s.vector for s in scored if s.pair.set_kind == SetKind.FORGET]
    report = UtilityReport(
        model_utility=aggregate(retain, Role.RETAIN),
        forget_efficacy=aggregate(forget, Role.FORGET) if forget else None,
    )
    for kind, members in sorted(_group(scored, lambda p: p.set_kind.value).items()):
        vectors = [s.vector for s in members]
        report.per_set[kind] = SetSummary(
            count=len(vectors),
            components=_component_means(vectors),
            mu=aggregate(vectors, Role.RETAIN),
        )
    by_category = _group(
        (s for s in scored if s.pair.set_kind != SetKind.FORGET),
        lambda p: None if p.category is None else p.category.value,
    )
    for category, members in sorted(by_category.items()):
        report.per_category[category] = aggregate([s.vector for s in members])
    if before is not None:
        for kind, summary in report.per_set.items():
            if kind != SetKind.FORGET.value and kind in before.per_set:
                report.rud[kind] = relative_utility_drop(
                    before.per_set[kind].mu, summary.mu
                )
    return report


def correct_before(example: ScoredExample) -> bool:
    """Default paraphrase filter: the full answer was recalled."""
    recall = example.vector.rouge_l_recall
    return recall is None or recall >= 1.0


def _paraphrase_utility(members: Sequence[ScoredExample]) -> float:
    roots: Dict[str, List[MetricVector]] = {}
    for s in members:
        roots.setdefault(s.pair.paraphrase_of or s.pair.id, []).append(s.vector)
    return math.fsum(aggregate(v) for (_, v) in sorted(roots.items())) / len(roots)


def rud_by_group(
    before: Sequence[ScoredExample],
    after: Sequence[ScoredExample],
    key: GroupKey,
    passed: Callable[[ScoredExample], bool] = correct_before,
) -> Dict[str, float]:
    """Relative utility drop per group of examples.

    Groups are set kinds, categories, or for ‘paraphrase_group’ the set
    kinds of paraphrase records, where each original question contributes
    the mean over its paraphrases that ‘passed’ before unlearning.
    """
    if key == GroupKey.PARAPHRASE_GROUP:
        chosen = set(s.pair.id for s in before if s.pair.paraphrase_of and passed(s))
        before = [s for s in before if s.pair.id in chosen]
        after = [s for s in after if s.pair.id in chosen]

    def group_of(p: QAPair) -> Optional[str]:
        if p.set_kind == SetKind.FORGET:
            return None
        if key == GroupKey.CATEGORY:
            return None if p.category is None else p.category.value
        return p.set_kind.value

    groups_before = _group(before, group_of)
    groups_after = _group(after, group_of)
    if set(groups_before) != set(groups_after):
        raise GroupMismatch(
            "groups differ before ({0}) and after ({1}) unlearning".format(
                ", ".join(sorted(groups_before)), ", ".join(sorted(groups_after))
            )
        )
    out: Dict[str, float] = {}
    for name in sorted(groups_before):
        b = groups_before[name]
        a = groups_after[name]
        if sorted(s.pair.id for s in b) != sorted(s.pair.id for s in a):
            raise GroupMismatch("group ‘{0}’ covers different examples".format(name))
        if key == GroupKey.PARAPHRASE_GROUP:
            out[name] = relative_utility_drop(_paraphrase_utility(b), _paraphrase_utility(a))
        else:
            out[name] = relative_utility_drop(
                aggregate([s.vector for s in b]), aggregate([s.vector for s in a])
            )
    return out


def reference_rud(
    table: Mapping[str, Mapping[str, float]], baseline: str = "Original"
) -> Dict[str, Dict[str, float]]:
    """RUD of every row of a published utility table against its baseline
    row, skipping the forget efficacy column."""
    if baseline not in table:
        raise GroupMismatch("table has no ‘{0}’ row".format(baseline))
    base = table[baseline]
    out: Dict[str, Dict[str, float]] = {}
    for method, row in table.items():
        if method == baseline:
            continue
        out[method] = {
            col: relative_utility_drop(base[col], value)
            for (col, value) in row.items()
            if col != "FE" and col in base
        }
    return out
