# -*- coding: utf-8 -*-
"""Construction and validation of neighbor sets around a forget set.

The syntactically similar neighbor set is built in four stages: forget
questions are clustered by masked similarity, candidate entities are
drawn from the retain side, cluster templates are filled with those
entities and the resulting pairs are kept only if the model under study
can answer them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import networkx as nx
import numpy as np

from unlearnlab.clients import (
    EntityMasker,
    PortError,
    QAGenerator,
    TextGenerator,
    TokenScorer,
    fan_out,
)
from unlearnlab.dataset import Category, QAPair, SetKind
from unlearnlab.logger import StageLogger
from unlearnlab.textsim import (
    MaskedSentence,
    levenshtein_similarity,
    mask_entities,
    similarity_matrix,
)
from unlearnlab.util import LabError


class InvalidThresholds(LabError):
    pass


class EmptyForgetSet(LabError):
    pass


class GenerationFailed(LabError):
    pass


class NoValidFill(LabError):
    pass


@dataclass(frozen=True)
class Thresholds:
    theta_high: float = 0.75
    theta_low: float = 0.4
    min_cluster_size: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta_low < self.theta_high <= 1.0:
            raise InvalidThresholds(
                "thresholds must satisfy 0 ≤ theta_low < theta_high ≤ 1, got {0} and {1}".format(
                    self.theta_low, self.theta_high
                )
            )
        if self.min_cluster_size < 2:
            raise InvalidThresholds("min_cluster_size must be at least 2")


@dataclass(frozen=True)
class SyntacticCluster:
    cluster_id: int
    member_ids: Tuple[str, ...]
    template: MaskedSentence
    min_intra_similarity: float


def mask_pairs(
    pairs: Sequence[QAPair], masker: EntityMasker
) -> Dict[str, MaskedSentence]:
    """Masked question of every pair, keyed by pair id."""
    return fan_out(
        masker, [(p.id, p.question) for p in pairs], lambda q: mask_entities(q, masker)
    )


def _prune_to_clique(
    members: List[int], sim: np.ndarray, ids: Sequence[str], theta: float
) -> List[int]:
    members = list(members)
    while len(members) > 1:
        sub = sim[np.ix_(members, members)]
        if sub.min() >= theta:
            break
        means = (sub.sum(axis=1) - np.diag(sub)) / (len(members) - 1)
        drop = min(range(len(members)), key=lambda k: (means[k], ids[members[k]]))
        members.pop(drop)
    return members


def cluster_forget_questions(
    forget: Sequence[QAPair],
    th: Thresholds,
    masker: EntityMasker,
    nr_workers: int = 1,
    logger: Optional[StageLogger] = None,
) -> List[SyntacticCluster]:
    if not forget:
        raise EmptyForgetSet("the forget set is empty")
    ids = [p.id for p in forget]
    masked = mask_pairs(forget, masker)
    sentences = [masked[i] for i in ids]
    sim = similarity_matrix(sentences, nr_workers)

    graph = nx.Graph()
    graph.add_nodes_from(range(len(ids)))
    rows, cols = np.nonzero(np.triu(sim >= th.theta_high, k=1))
    graph.add_edges_from(zip(rows.tolist(), cols.tolist()))
    components = sorted(sorted(c) for c in nx.connected_components(graph))

    clusters: List[SyntacticCluster] = []
    for component in components:
        members = _prune_to_clique(component, sim, ids, th.theta_high)
        if len(members) < th.min_cluster_size:
            if logger and len(component) >= th.min_cluster_size:
                logger.log(
                    "dropping group around ‘{0}’: {1} of {2} members left after pruning".format(
                        ids[component[0]], len(members), len(component)
                    )
                )
            continue
        sub = sim[np.ix_(members, members)]
        means = (sub.sum(axis=1) - np.diag(sub)) / (len(members) - 1)
        centre = min(range(len(members)), key=lambda k: (-means[k], ids[members[k]]))
        off_diagonal = sub[~np.eye(len(members), dtype=bool)]
        clusters.append(
            SyntacticCluster(
                cluster_id=len(clusters),
                member_ids=tuple(ids[m] for m in members),
                template=sentences[members[centre]],
                min_intra_similarity=float(off_diagonal.min()),
            )
        )
    if logger:
        logger.log(
            "{0} forget questions, {1} clusters".format(len(forget), len(clusters))
        )
    return clusters


def select_candidate_entities(
    retain_entities: Sequence[str], excluded: Iterable[str]
) -> List[str]:
    skip = set(excluded)
    out: List[str] = []
    for e in retain_entities:
        if e not in skip:
            out.append(e)
            skip.add(e)
    return out


def _mask_with_entity(question: str, entity: str, masker: EntityMasker) -> MaskedSentence:
    spans = list(masker.mask(question))
    spans.extend(
        m.span() for m in re.finditer(r"(?<!\w)" + re.escape(entity) + r"(?!\w)", question)
    )
    return MaskedSentence.from_spans(question, spans)


def generate_syn_similar_pairs(
    clusters: Sequence[SyntacticCluster],
    candidates: Sequence[str],
    qa_gen: QAGenerator,
    masker: EntityMasker,
    th: Thresholds,
    other_sets: Sequence[QAPair] = (),
    per_cluster: Optional[int] = None,
    categories: Optional[Mapping[str, Category]] = None,
    id_prefix: str = "syn",
    logger: Optional[StageLogger] = None,
) -> List[QAPair]:
    """Fill every cluster template with candidate entities.

    A generated question is kept when it matches the cluster template at
    θ_high or above and stays at θ_low or below against every question of
    the other neighbor sets. Candidates are tried in order until
    ‘per_cluster’ questions (default: the cluster size) are kept.
    """
    if not candidates:
        raise NoValidFill("there are no candidate entities to fill templates with")
    others = [mask_entities(p.question, masker) for p in other_sets]
    categories = categories or {}
    pairs: List[QAPair] = []
    for cluster in clusters:
        wanted = per_cluster if per_cluster is not None else len(cluster.member_ids)
        made = 0
        for entity in candidates:
            if made >= wanted:
                break
            try:
                qa = qa_gen.fill(cluster.template.masked, entity)
            except PortError as e:
                raise GenerationFailed(
                    "generating a question about ‘{0}’ failed: {1}".format(entity, e)
                )
            if qa is None:
                continue
            masked = _mask_with_entity(qa.question, entity, masker)
            score = levenshtein_similarity(masked, cluster.template).value
            if score < th.theta_high:
                if logger:
                    logger.log(
                        "‘{0}’ drifts from the template (similarity {1:.3f})".format(
                            qa.question, score
                        )
                    )
                continue
            if any(levenshtein_similarity(masked, o).value > th.theta_low for o in others):
                if logger:
                    logger.log(
                        "‘{0}’ resembles another neighbor set".format(qa.question)
                    )
                continue
            pairs.append(
                QAPair(
                    id="{0}-{1}-{2}".format(id_prefix, cluster.cluster_id, made),
                    entity=entity,
                    question=qa.question,
                    answer=qa.answer,
                    aliases=qa.aliases,
                    set_kind=SetKind.SYN_SIMILAR_NEIGHBOR,
                    cluster_id=cluster.cluster_id,
                    category=categories.get(entity),
                )
            )
            made += 1
        if made == 0:
            raise NoValidFill(
                "no candidate yields a question matching cluster {0} (‘{1}’)".format(
                    cluster.cluster_id, cluster.template.masked
                )
            )
        if logger:
            logger.log(
                "cluster {0} ‘{1}’: {2} pairs".format(
                    cluster.cluster_id, cluster.template.masked, made
                )
            )
    return pairs


def _fold(text: str) -> str:
    return " ".join(text.lower().split())


def alias_match(generation: str, answer: str, aliases: Sequence[str]) -> bool:
    """Case-insensitive containment of the answer or one of its aliases."""
    said = _fold(generation)
    return any(_fold(a) and _fold(a) in said for a in (answer,) + tuple(aliases))


Matcher = Callable[[str, str, Sequence[str]], bool]


def probe_filter(
    pairs: Sequence[QAPair],
    generator: TextGenerator,
    matcher: Matcher = alias_match,
    scorer: Optional[TokenScorer] = None,
    min_probability: float = 0.0,
    max_tokens: int = 32,
    logger: Optional[StageLogger] = None,
) -> Tuple[List[QAPair], List[QAPair]]:
    """Split ‘pairs’ into those the model answers correctly and the rest.

    With a scorer, a pair must also reach ‘min_probability’ as the mean
    token probability of its answer.
    """
    replies = fan_out(
        generator,
        [(p.id, p.question) for p in pairs],
        lambda q: generator.generate(q, max_tokens=max_tokens),
    )
    probabilities: Dict[str, float] = {}
    if scorer is not None and min_probability > 0.0:
        scores = fan_out(
            scorer,
            [(p.id, p) for p in pairs],
            lambda p: scorer.score(p.question, p.answer),  # type: ignore
        )
        probabilities = {i: float(np.mean(s)) for (i, s) in scores.items()}
    kept: List[QAPair] = []
    dropped: List[QAPair] = []
    if logger:
        logger.log_start("probing ")
    for p in pairs:
        ok = matcher(replies[p.id], p.answer, p.aliases)
        if ok and probabilities:
            ok = probabilities[p.id] >= min_probability
        (kept if ok else dropped).append(p)
        if logger:
            logger.log_continue(logger.tally_mark(ok))
    if logger:
        logger.log_end(" kept {0} of {1} pairs".format(len(kept), len(pairs)))
    return (kept, dropped)


class Violation(NamedTuple):
    set_kind: SetKind
    neighbor_id: str
    forget_id: str
    score: float


class Overlap(NamedTuple):
    set_kind: SetKind
    entity: str


@dataclass
class DistinctnessReport:
    violations: List[Violation] = field(default_factory=list)
    overlaps: List[Overlap] = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations and not self.overlaps


def validate_distinctness(
    neighbor_sets: Mapping[SetKind, Sequence[QAPair]],
    forget: Sequence[QAPair],
    th: Thresholds,
    masker: EntityMasker,
) -> DistinctnessReport:
    """Check that domain and entity neighbors do not look like forget
    questions, and that the syntactically similar set shares no entity
    with the forget set or the other neighbor sets."""
    report = DistinctnessReport()
    forget_masked = mask_pairs(forget, masker)
    for kind in (SetKind.DOMAIN_NEIGHBOR, SetKind.ENTITY_NEIGHBOR):
        pairs = neighbor_sets.get(kind, ())
        masked = mask_pairs(pairs, masker)
        for p in pairs:
            for f in forget:
                score = levenshtein_similarity(masked[p.id], forget_masked[f.id]).value
                report.checked += 1
                if score > th.theta_low:
                    report.violations.append(Violation(kind, p.id, f.id, score))

    syn_entities = set(p.entity for p in neighbor_sets.get(SetKind.SYN_SIMILAR_NEIGHBOR, ()))
    if syn_entities:
        against = {SetKind.FORGET: forget}
        against.update(
            (k, v)
            for (k, v) in neighbor_sets.items()
            if k in (SetKind.DOMAIN_NEIGHBOR, SetKind.ENTITY_NEIGHBOR)
        )
        for kind in sorted(against, key=lambda k: k.value):
            for entity in sorted(syn_entities & set(p.entity for p in against[kind])):
                report.overlaps.append(Overlap(kind, entity))
    return report


class SetStats(NamedTuple):
    pairs: int
    entities: int


def group_by_kind(pairs: Iterable[QAPair]) -> Dict[SetKind, List[QAPair]]:
    groups: Dict[SetKind, List[QAPair]] = {}
    for p in pairs:
        groups.setdefault(p.set_kind, []).append(p)
    return groups


def set_statistics(sets: Mapping[SetKind, Sequence[QAPair]]) -> Dict[SetKind, SetStats]:
    return {
        kind: SetStats(pairs=len(pairs), entities=len(set(p.entity for p in pairs)))
        for (kind, pairs) in sets.items()
    }


@dataclass
class SynSetResult:
    clusters: List[SyntacticCluster]
    candidates: List[str]
    kept: List[QAPair]
    dropped: List[QAPair]


def build_syn_similar_set(
    forget: Sequence[QAPair],
    retain_entities: Sequence[str],
    excluded: Iterable[str],
    masker: EntityMasker,
    qa_gen: QAGenerator,
    th: Thresholds,
    generator: Optional[TextGenerator] = None,
    other_sets: Sequence[QAPair] = (),
    per_cluster: Optional[int] = None,
    categories: Optional[Mapping[str, Category]] = None,
    nr_workers: int = 1,
    logger: Optional[StageLogger] = None,
) -> SynSetResult:
    """Cluster, select, generate and (given a generator) probe in one go."""
    clusters = cluster_forget_questions(forget, th, masker, nr_workers, logger)
    excluded = set(excluded) | set(p.entity for p in forget) | set(p.entity for p in other_sets)
    candidates = select_candidate_entities(retain_entities, excluded)
    if logger:
        logger.log("{0} candidate entities".format(len(candidates)))
    pairs = generate_syn_similar_pairs(
        clusters,
        candidates,
        qa_gen,
        masker,
        th,
        other_sets=other_sets,
        per_cluster=per_cluster,
        categories=categories,
        logger=logger,
    )
    if generator is None:
        return SynSetResult(clusters, candidates, pairs, [])
    kept, dropped = probe_filter(pairs, generator, logger=logger)
    return SynSetResult(clusters, candidates, kept, dropped)
