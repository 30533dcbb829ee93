# -*- coding: utf-8 -*-
"""Templated fact corpus for the toy model.

The corpus has two mirrored blocks of four templates, thirty entities and
twenty answer tokens each. Block A holds the forget set and its
syntactically similar, domain and entity neighbors; block B repeats block
A's facts on syntactically different templates, so its mirror of the
syntactically similar test facts serves as the syntactically different
neighbor set. The syntactically similar set itself is produced by the
neighbor-set pipeline run over the rendered questions.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from unlearnlab.clients import (
    PortDescriptor,
    ProtocolError,
    TextGenerator,
    TokenScorer,
)
from unlearnlab.clients.offline import AnswerEntry, RuleBasedMasker, TemplateQAGenerator
from unlearnlab.config import CorpusSizes
from unlearnlab.dataset import Category, QAPair, SetKind
from unlearnlab.logger import StageLogger
from unlearnlab.neighborset import (
    SyntacticCluster,
    Thresholds,
    build_syn_similar_set,
)
from unlearnlab.textsim import MASK, mask_entities, normalize
from unlearnlab.toylab.model import ToyModel
from unlearnlab.util import LabError


class InfeasibleSizes(LabError):
    pass


BLOCK_TEMPLATES = 4
BLOCK_ENTITIES = 30
BLOCK_TOKENS = 20
POOL = 5

# Masked surfaces. Block A first; template t + 4 mirrors template t.
TEMPLATES = (
    "When was {X} born?",
    "Which city did {X} grow up in?",
    "Which line of work did {X} spend most of their career in according to the available records?",
    "Which award or public honour is most often mentioned when people talk about the work of {X}?",
    "In which year do the archives list the birth of {X} when they describe the early chapters of that life?",
    "What is the name of the place where {X} spent the formative years of childhood and early youth?",
    "For what kind of occupation is {X} best remembered among the people who followed that long career closely?",
    "What recognition did {X} receive that critics and historians still bring up when they review the whole body of work?",
)

# Alternative renderings that the model maps to the same template row.
PARAPHRASES: Dict[int, Tuple[str, ...]] = {
    0: ("In what year was {X} born?", "What is the birth year of {X}?"),
    1: ("In which city did {X} grow up?", "Where did {X} spend the years of childhood?"),
    4: (
        "Which year of birth do the archives record for {X} in their account of the early chapters of that life?",
        "According to the archives, in what year was {X} born, as told in the early chapters of that life story?",
    ),
    5: (
        "Where exactly did {X} spend the formative years of childhood and early youth, according to the records?",
        "Which place is named as the home of {X} during the formative years of childhood and early youth?",
    ),
}

ENTITIES = (
    "Alma Reyes", "Bruno Castell", "Clara Voss", "Dmitri Albescu", "Elena Marsh",
    "Farid Okafor", "Greta Lindholm", "Hugo Tavares", "Ines Moreau", "Jonas Ekberg",
    "Kaia Novak", "Lucian Aldana", "Maren Hollis", "Nico Ferrante", "Odile Brandt",
    "Pavel Richter", "Quinn Abernathy", "Rosa Delgado", "Silas Whitcombe", "Tamsin Okoye",
    "Ulric Haddad", "Vera Kowalczyk", "Wendell Ashby", "Ximena Ortiz", "Yusuf Karaca",
    "Zora Lindqvist", "Anselm Petrov", "Beatrix Vane", "Cyrus Mendel", "Delia Stroud",
    "Emil Sandoval", "Fiona Castellan", "Gideon Marlow", "Hedda Solberg", "Ivan Morozov",
    "Johanna Quist", "Kasimir Bell", "Leona Marchetti", "Magnus Thorne", "Nadia Farouk",
    "Otto Kessler", "Priya Raman", "Rafael Ibarra", "Sabine Keller", "Teodor Vasquez",
    "Ursula Grant", "Viktor Hale", "Wilhelmina Roe", "Yannick Dufour", "Zelda Harrow",
    "Aurelio Conti", "Brigid Fallon", "Casimir Drake", "Dagny Holm", "Esteban Ruiz",
    "Freya Nilsen", "Gustav Arnholt", "Helene Laurent", "Isidore Blake", "Juno Castillo",
)

TOKENS = (
    "1931", "1947", "1958", "1963", "1976",
    "Lisbon", "Gdansk", "Valparaiso", "Tromso", "Kyoto",
    "architecture", "journalism", "marine biology", "cartography", "opera",
    "the Laurel Prize", "the Meridian Medal", "the Civic Star", "the Halden Award", "the Open Quill",
    "1929", "1944", "1952", "1968", "1981",
    "Porto", "Krakow", "Santiago", "Bergen", "Osaka",
    "carpentry", "broadcasting", "astronomy", "surveying", "ballet",
    "the Harbor Prize", "the Northern Medal", "the Lyre Award", "the Beacon Cross", "the Silver Pen",
)

# Categories cycled over entities outside the forget and domain roles.
_CATEGORY_CYCLE = (
    Category.HUMAN,
    Category.COMPANY,
    Category.CREATIVE_WORKS,
    Category.FICTIONAL_CHARACTER,
    Category.PRODUCT,
)

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class ToyFact:
    id: str
    template_id: int
    entity_id: int
    answer_token: int
    entity: str
    answer: str
    rendered_question: str
    set_kind: Optional[SetKind] = None
    category: Optional[Category] = None
    split: Optional[str] = None
    paraphrase_of: Optional[str] = None

    def to_pair(self) -> QAPair:
        return QAPair(
            id=self.id,
            entity=self.entity,
            question=self.rendered_question,
            answer=self.answer,
            set_kind=self.set_kind or SetKind.FORGET,
            cluster_id=self.template_id
            if self.set_kind == SetKind.SYN_SIMILAR_NEIGHBOR
            else None,
            category=self.category,
            paraphrase_of=self.paraphrase_of,
        )


def mirror_tokens(vocab: int) -> np.ndarray:
    """Token permutation swapping the two answer blocks (IDK stays)."""
    perm = np.arange(vocab)
    perm[:BLOCK_TOKENS] += BLOCK_TOKENS
    perm[BLOCK_TOKENS : 2 * BLOCK_TOKENS] -= BLOCK_TOKENS
    return perm


@dataclass
class ToyCorpus:
    seed: int
    sizes: CorpusSizes
    facts: List[ToyFact]
    paraphrases: List[ToyFact]
    clusters: List[SyntacticCluster]
    categories: Tuple[Category, ...]
    relations: List[Tuple[int, int]]
    masker: RuleBasedMasker
    idk_text: str = "I don't know."
    _by_surface: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for t, surface in enumerate(TEMPLATES):
            self._by_surface[normalize(surface)] = t
        for t, variants in PARAPHRASES.items():
            for surface in variants:
                self._by_surface[normalize(surface)] = t

    @property
    def n_templates(self) -> int:
        return len(TEMPLATES)

    @property
    def n_entities(self) -> int:
        return len(ENTITIES)

    @property
    def vocab(self) -> int:
        return len(TOKENS) + 1

    @property
    def idk_token(self) -> int:
        return len(TOKENS)

    def token_text(self, token: int) -> str:
        return self.idk_text if token == self.idk_token else TOKENS[token]

    def select(
        self, kind: SetKind, split: Optional[str] = None, paraphrases: bool = False
    ) -> List[ToyFact]:
        pool = self.paraphrases if paraphrases else self.facts
        return [
            f
            for f in pool
            if f.set_kind == kind and (split is None or f.split == split)
        ]

    @property
    def forget(self) -> List[ToyFact]:
        return self.select(SetKind.FORGET)

    def sets(self, split: Optional[str] = None) -> Dict[SetKind, List[ToyFact]]:
        out = {SetKind.FORGET: self.forget}
        for kind in (
            SetKind.DOMAIN_NEIGHBOR,
            SetKind.ENTITY_NEIGHBOR,
            SetKind.SYN_SIMILAR_NEIGHBOR,
            SetKind.SYN_DIFFERENT_NEIGHBOR,
        ):
            out[kind] = self.select(kind, split)
        return out

    def pairs(self) -> List[QAPair]:
        """Every tagged fact and paraphrase as a dataset record."""
        return [f.to_pair() for f in self.facts + self.paraphrases if f.set_kind]

    def parse(self, question: str) -> Optional[Tuple[int, int]]:
        """(template, entity) behind a rendered question, if it is one."""
        masked = mask_entities(question, self.masker)
        t = self._by_surface.get(normalize(masked.masked))
        if t is None or len(masked.mask_spans) != 1:
            return None
        (start, end) = masked.mask_spans[0]
        try:
            return (t, ENTITIES.index(question[start:end]))
        except ValueError:
            return None

    def init_model(self, seed: int, scale: float = 0.1) -> ToyModel:
        """Random parameters with block B an exact mirror of block A."""
        half = ToyModel.random(BLOCK_TEMPLATES, BLOCK_ENTITIES, self.vocab, seed, scale)
        perm = mirror_tokens(self.vocab)
        b = half.b.copy()
        b[BLOCK_TOKENS : 2 * BLOCK_TOKENS] = b[:BLOCK_TOKENS]
        return ToyModel(
            np.vstack([half.u, half.u[:, perm]]),
            np.vstack([half.v, half.v[:, perm]]),
            b,
        )


def _render(template: int, entity: int, surface: Optional[str] = None) -> str:
    return (surface or TEMPLATES[template]).replace(MASK, ENTITIES[entity])


def _check_sizes(sizes: CorpusSizes, th: Thresholds) -> None:
    counts = (sizes.forget_entities, sizes.syn_similar, sizes.domain, sizes.entity)
    if min(counts) < 1:
        raise InfeasibleSizes("every role needs at least one entity")
    if sizes.forget_entities < th.min_cluster_size:
        raise InfeasibleSizes(
            "{0} forget entities cannot form clusters of {1}".format(
                sizes.forget_entities, th.min_cluster_size
            )
        )
    if min(sizes.syn_similar, sizes.domain, sizes.entity) < 2:
        raise InfeasibleSizes("neighbor roles need two entities for a train/test split")
    if sum(counts) > BLOCK_ENTITIES:
        raise InfeasibleSizes(
            "{0} entities requested, a block only has {1}".format(sum(counts), BLOCK_ENTITIES)
        )


def build_toy_corpus(
    seed: int = 0,
    sizes: CorpusSizes = CorpusSizes(),
    th: Thresholds = Thresholds(),
    logger: Optional[StageLogger] = None,
) -> ToyCorpus:
    _check_sizes(sizes, th)
    f = sizes.forget_entities
    roles: List[Tuple[SetKind, int]] = [
        (SetKind.FORGET, f),
        (SetKind.SYN_SIMILAR_NEIGHBOR, sizes.syn_similar),
        (SetKind.DOMAIN_NEIGHBOR, sizes.domain),
        (SetKind.ENTITY_NEIGHBOR, sizes.entity),
    ]
    role_of: Dict[int, Optional[SetKind]] = {}
    members: Dict[SetKind, List[int]] = {}
    e = 0
    for (kind, count) in roles:
        members[kind] = list(range(e, e + count))
        for i in members[kind]:
            role_of[i] = kind
        e += count
    background = list(range(e, BLOCK_ENTITIES))
    for i in background:
        role_of[i] = None

    categories: List[Category] = []
    for i in range(BLOCK_ENTITIES):
        if role_of[i] in (SetKind.FORGET, SetKind.DOMAIN_NEIGHBOR):
            categories.append(Category.HUMAN)
        else:
            categories.append(_CATEGORY_CYCLE[i % len(_CATEGORY_CYCLE)])
    categories = categories + categories

    templates_of: Dict[Optional[SetKind], Tuple[int, ...]] = {
        SetKind.FORGET: (0, 1),
        SetKind.SYN_SIMILAR_NEIGHBOR: (0, 1),
        SetKind.DOMAIN_NEIGHBOR: (2, 3),
        SetKind.ENTITY_NEIGHBOR: (2, 3),
        None: (0, 1, 2, 3),
    }

    # Most facts of a template share its dominant answer; every fourth
    # fact draws an alternative from the template's pool.
    rng = np.random.default_rng(seed)
    answers: Dict[Tuple[int, int], int] = {}
    n = 0
    for ent in range(BLOCK_ENTITIES):
        for t in templates_of[role_of[ent]]:
            if n % 4 == 3:
                answers[(t, ent)] = POOL * t + 1 + int(rng.integers(POOL - 1))
            else:
                answers[(t, ent)] = POOL * t
            n += 1
    for (t, ent), a in list(answers.items()):
        answers[(t + BLOCK_TEMPLATES, ent + BLOCK_ENTITIES)] = a + BLOCK_TOKENS

    relations = [
        (nb, members[SetKind.FORGET][k % f])
        for (k, nb) in enumerate(members[SetKind.ENTITY_NEIGHBOR])
    ]

    def fact(t: int, ent: int, fid: str, kind: Optional[SetKind]) -> ToyFact:
        return ToyFact(
            id=fid,
            template_id=t,
            entity_id=ent,
            answer_token=answers[(t, ent)],
            entity=ENTITIES[ent],
            answer=TOKENS[answers[(t, ent)]],
            rendered_question=_render(t, ent),
            set_kind=kind,
            category=categories[ent] if kind else None,
        )

    prefixes = {
        SetKind.FORGET: "forget",
        SetKind.DOMAIN_NEIGHBOR: "domain",
        SetKind.ENTITY_NEIGHBOR: "entity",
    }
    facts: Dict[Tuple[int, int], ToyFact] = {}
    for (t, ent) in sorted(answers, key=lambda k: (k[1], k[0])):
        kind = role_of.get(ent) if ent < BLOCK_ENTITIES else None
        if kind in prefixes:
            fid = "{0}-{1}-{2}".format(prefixes[kind], ent, t)  # type: ignore
            facts[(t, ent)] = fact(t, ent, fid, kind)
        else:
            facts[(t, ent)] = fact(t, ent, "retain-{0}-{1}".format(ent, t), None)

    masker = RuleBasedMasker(entities=ENTITIES, capitalized=False, dates=False)
    qa_gen = TemplateQAGenerator(
        {
            (TEMPLATES[t], ENTITIES[ent]): AnswerEntry(TOKENS[a])
            for ((t, ent), a) in answers.items()
        }
    )
    forget_pairs = [x.to_pair() for x in facts.values() if x.set_kind == SetKind.FORGET]
    other_pairs = [
        x.to_pair()
        for x in facts.values()
        if x.set_kind in (SetKind.DOMAIN_NEIGHBOR, SetKind.ENTITY_NEIGHBOR)
    ]
    retain_entities = [
        ENTITIES[i]
        for i in range(2 * BLOCK_ENTITIES)
        if i >= BLOCK_ENTITIES or role_of[i] != SetKind.FORGET
    ]
    result = build_syn_similar_set(
        forget_pairs,
        retain_entities,
        excluded=[p.entity for p in other_pairs],
        masker=masker,
        qa_gen=qa_gen,
        th=th,
        other_sets=other_pairs,
        per_cluster=sizes.syn_similar,
        categories={ENTITIES[i]: categories[i] for i in range(len(ENTITIES))},
        logger=logger,
    )

    corpus = ToyCorpus(
        seed=seed,
        sizes=sizes,
        facts=[],
        paraphrases=[],
        clusters=result.clusters,
        categories=tuple(categories),
        relations=relations,
        masker=masker,
    )
    syn_entities: List[int] = []
    for pair in result.kept:
        parsed = corpus.parse(pair.question)
        if parsed is None or parsed not in facts:
            raise InfeasibleSizes("generated question ‘{0}’ has no fact".format(pair.question))
        ent = parsed[1]
        if ent not in syn_entities:
            syn_entities.append(ent)
        facts[parsed] = replace(
            facts[parsed],
            id=pair.id,
            set_kind=SetKind.SYN_SIMILAR_NEIGHBOR,
            category=categories[ent],
        )

    def split_of(kind: SetKind, ent: int) -> Optional[str]:
        group = syn_entities if kind == SetKind.SYN_SIMILAR_NEIGHBOR else members[kind]
        if ent not in group:
            return None
        return TRAIN if group.index(ent) < len(group) // 2 else TEST

    for key, x in list(facts.items()):
        if x.set_kind in (
            SetKind.SYN_SIMILAR_NEIGHBOR,
            SetKind.DOMAIN_NEIGHBOR,
            SetKind.ENTITY_NEIGHBOR,
        ):
            facts[key] = replace(x, split=split_of(x.set_kind, x.entity_id))

    for (t, ent), x in list(facts.items()):
        if x.set_kind == SetKind.SYN_SIMILAR_NEIGHBOR and x.split == TEST:
            key = (t + BLOCK_TEMPLATES, ent + BLOCK_ENTITIES)
            facts[key] = replace(
                facts[key],
                id="syndiff-{0}-{1}".format(key[1], key[0]),
                set_kind=SetKind.SYN_DIFFERENT_NEIGHBOR,
                category=categories[key[1]],
                split=TEST,
            )

    ordered = [facts[k] for k in sorted(facts, key=lambda k: (k[1], k[0]))]
    paraphrases: List[ToyFact] = []
    for x in ordered:
        if x.split != TEST or x.template_id not in PARAPHRASES:
            continue
        if x.set_kind not in (SetKind.SYN_SIMILAR_NEIGHBOR, SetKind.SYN_DIFFERENT_NEIGHBOR):
            continue
        for k, surface in enumerate(PARAPHRASES[x.template_id]):
            paraphrases.append(
                replace(
                    x,
                    id="{0}-para-{1}".format(x.id, k),
                    rendered_question=_render(x.template_id, x.entity_id, surface),
                    paraphrase_of=x.id,
                )
            )
    corpus.facts = ordered
    corpus.paraphrases = paraphrases
    if logger:
        logger.log(
            "{0} facts, {1} paraphrases, {2} clusters".format(
                len(ordered), len(paraphrases), len(result.clusters)
            )
        )
    return corpus


class ToyGenerator(TextGenerator):
    """Answers a rendered question with the model's most likely token."""

    def __init__(
        self, model: ToyModel, corpus: ToyCorpus, descriptor: Optional[PortDescriptor] = None
    ) -> None:
        TextGenerator.__init__(self, descriptor)
        self.model = model
        self.corpus = corpus

    def generate(self, prompt: str, max_tokens: int = 64) -> str:
        parsed = self.corpus.parse(prompt)
        if parsed is None:
            return ""
        token = self.model.predict(np.array([parsed[0]]), np.array([parsed[1]]))[0]
        return self.corpus.token_text(int(token))


class ToyScorer(TokenScorer):
    def __init__(
        self, model: ToyModel, corpus: ToyCorpus, descriptor: Optional[PortDescriptor] = None
    ) -> None:
        TokenScorer.__init__(self, descriptor)
        self.model = model
        self.corpus = corpus
        self._tokens = {self.corpus.token_text(k): k for k in range(corpus.vocab)}

    def score(self, prompt: str, target: str) -> List[float]:
        parsed = self.corpus.parse(prompt)
        if parsed is None:
            raise ProtocolError("‘{0}’ is not a corpus question".format(prompt))
        if target not in self._tokens:
            raise ProtocolError("‘{0}’ is not an answer token".format(target))
        p = self.model.probabilities(np.array([parsed[0]]), np.array([parsed[1]]))[0]
        return [max(float(p[self._tokens[target]]), float(np.finfo(float).tiny))]
