# -*- coding: utf-8 -*-
"""Deterministic adapters that need neither a network nor a model."""
from __future__ import annotations

import re
import string
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.feature_extraction.text import HashingVectorizer

from unlearnlab.clients import (
    Embedder,
    EntityMasker,
    GeneratedQA,
    NLIJudge,
    NLILabel,
    PortDescriptor,
    ProtocolError,
    QAGenerator,
)
from unlearnlab.textsim import MASK, normalize

_MONTHS = (
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
)

_DATE_RE = re.compile(
    r"(?:(?:{m})\s+\d{{1,2}}(?:st|nd|rd|th)?(?:,?\s+\d{{3,4}})?)"
    r"|(?:\d{{1,2}}\s+(?:{m})(?:,?\s+\d{{3,4}})?)"
    r"|(?:(?:{m})\s+\d{{4}})"
    r"|(?:\d+(?:[./-]\d+)*)".format(m="|".join(_MONTHS))
)

_TOKEN_RE = re.compile(r"[^\s?!,;:()\[\]\"“”]+")

_POSSESSIVE_RE = re.compile(r"['’]s$")

# Capitalised only because they open a sentence.
_FUNCTION_WORDS = frozenset(
    """a an and are at by can could did do does for from had has have how
    if in is it its of on or should the their there these this to was were
    what when where which who whom whose why will with would""".split()
)

# Lower-case words allowed inside a name ("Bank of America").
_CONNECTORS = frozenset("of the de da del van von and & -".split())


class RuleBasedMasker(EntityMasker):
    """Masks dictionary entities, dates and runs of capitalised words."""

    def __init__(
        self,
        entities: Iterable[str] = (),
        capitalized: bool = True,
        dates: bool = True,
        descriptor: Optional[PortDescriptor] = None,
    ) -> None:
        EntityMasker.__init__(self, descriptor)
        self.entities = sorted(set(e for e in entities if e), key=lambda e: (-len(e), e))
        self._entity_res = [
            re.compile(r"(?<!\w)" + re.escape(e) + r"(?!\w)") for e in self.entities
        ]
        self.capitalized = capitalized
        self.dates = dates

    def mask(self, text: str) -> List[Tuple[int, int]]:
        spans: List[Tuple[int, int]] = []
        for entity_re in self._entity_res:
            spans.extend(m.span() for m in entity_re.finditer(text))
        if self.dates:
            spans.extend(m.span() for m in _DATE_RE.finditer(text))
        if self.capitalized:
            spans.extend(self._capitalized_runs(text))
        return sorted(spans)

    def _capitalized_runs(self, text: str) -> List[Tuple[int, int]]:
        runs: List[Tuple[int, int]] = []
        run: Optional[List[int]] = None
        connector = False
        prev_end = 0
        sentence_start = True
        for m in _TOKEN_RE.finditer(text):
            start, end = m.span()
            gap = text[prev_end:start]
            if any(c in gap for c in "?!") or (gap.strip() and run is not None):
                sentence_start = sentence_start or any(c in gap for c in "?!")
                if run is not None:
                    runs.append((run[0], run[1]))
                    run = None
                connector = False
            word = m.group()
            possessive = _POSSESSIVE_RE.search(word)
            if possessive:
                word = word[: possessive.start()]
                end = start + possessive.start()
            ends_sentence = False
            if word.endswith(".") and len(word) > 3:
                word = word[:-1]
                end -= 1
                ends_sentence = True

            opener = sentence_start and word.lower() in _FUNCTION_WORDS
            if word[:1].isupper() and not opener and word != "I":
                if run is None:
                    run = [start, end]
                else:
                    run[1] = end
                connector = False
                if possessive or ends_sentence:
                    runs.append((run[0], run[1]))
                    run = None
            elif run is not None and not connector and word.lower() in _CONNECTORS:
                connector = True
            else:
                if run is not None:
                    runs.append((run[0], run[1]))
                    run = None
                connector = False
            prev_end = m.end()
            sentence_start = ends_sentence
        if run is not None:
            runs.append((run[0], run[1]))
        return runs


class AnswerEntry(object):
    def __init__(
        self, answer: str, aliases: Sequence[str] = (), question: Optional[str] = None
    ) -> None:
        self.answer = answer
        self.aliases = tuple(aliases)
        self.question = question


class TemplateQAGenerator(QAGenerator):
    """Fills the mask slot of a template with the entity name and looks the
    answer up in a (template, entity) table."""

    def __init__(
        self,
        table: Mapping[Tuple[str, str], AnswerEntry],
        descriptor: Optional[PortDescriptor] = None,
    ) -> None:
        QAGenerator.__init__(self, descriptor)
        self.table: Dict[Tuple[str, str], AnswerEntry] = {
            (normalize(t), e): entry for ((t, e), entry) in table.items()
        }

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]]) -> TemplateQAGenerator:
        table = {}
        for r in records:
            table[(r["template"], r["entity"])] = AnswerEntry(
                answer=r["answer"],
                aliases=r.get("aliases", []),
                question=r.get("question"),
            )
        return cls(table)

    def fill(self, template: str, entity: str) -> Optional[GeneratedQA]:
        entry = self.table.get((normalize(template), entity))
        if entry is None:
            return None
        question = entry.question
        if question is None:
            if template.count(MASK) != 1:
                return None
            question = template.replace(MASK, entity)
        return GeneratedQA(question=question, answer=entry.answer, aliases=entry.aliases)


def _words(text: str) -> List[str]:
    return text.lower().translate(str.maketrans("", "", string.punctuation)).split()


class LexicalNLIJudge(NLIJudge):
    """Entailment when every word of the premise appears, in order, in the
    hypothesis; neutral otherwise. Never reports contradiction."""

    def nli(self, premise: str, hypothesis: str) -> NLILabel:
        needle = " ".join(_words(premise))
        haystack = " ".join(_words(hypothesis))
        if needle and (needle == haystack or " " + needle + " " in " " + haystack + " "):
            return NLILabel.ENTAILMENT
        return NLILabel.NEUTRAL


class HashingEmbedder(Embedder):
    """Bag of word uni- and bigrams hashed into a fixed-size unit vector."""

    def __init__(
        self, n_features: int = 512, descriptor: Optional[PortDescriptor] = None
    ) -> None:
        Embedder.__init__(self, descriptor)
        self.vectorizer = HashingVectorizer(
            n_features=n_features,
            ngram_range=(1, 2),
            alternate_sign=False,
            norm="l2",
        )

    def embed(self, text: str) -> np.ndarray:
        vector = np.asarray(self.vectorizer.transform([text]).toarray()[0], dtype=float)
        if not np.any(vector):
            raise ProtocolError("text ‘{0}’ has no embeddable words".format(text))
        return vector
