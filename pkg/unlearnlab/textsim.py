# -*- coding: utf-8 -*-
"""Entity masking and normalised Levenshtein similarity between sentences.

Sentences are compared on their masked form: every entity span is
replaced by the literal token ``{X}`` so that two questions that differ
only in the entity they ask about score as identical.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, NamedTuple, Optional, Sequence, Tuple

import Levenshtein
import numpy as np

from unlearnlab.clients import MaskerUnavailable
from unlearnlab.parallel import run_tasks
from unlearnlab.util import LabError

if TYPE_CHECKING:
    from unlearnlab.clients import EntityMasker
    from unlearnlab.logger import StageLogger

MASK = "{X}"

Span = Tuple[int, int]


class InvalidMask(LabError):
    pass


def _normalise_spans(text: str, spans: Sequence[Span]) -> Tuple[Span, ...]:
    """Sort spans and merge the ones that overlap or touch."""
    merged: List[List[int]] = []
    for (start, end) in sorted(spans):
        if not 0 <= start < end <= len(text):
            raise InvalidMask(
                "span ‘{0}:{1}’ lies outside ‘{2}’".format(start, end, text)
            )
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return tuple((s, e) for (s, e) in merged)


@dataclass(frozen=True)
class MaskedSentence:
    original: str
    masked: str
    mask_spans: Tuple[Span, ...] = ()

    @classmethod
    def from_spans(cls, original: str, spans: Sequence[Span]) -> MaskedSentence:
        norm = _normalise_spans(original, spans)
        pieces = []
        pos = 0
        for (start, end) in norm:
            pieces.append(original[pos:start])
            pieces.append(MASK)
            pos = end
        pieces.append(original[pos:])
        return cls(original=original, masked="".join(pieces), mask_spans=norm)

    @classmethod
    def premasked(cls, text: str) -> MaskedSentence:
        """Wrap text that already carries mask tokens (e.g. a cluster template)."""
        spans = tuple(
            (m.start(), m.end()) for m in re.finditer(re.escape(MASK), text)
        )
        return cls(original=text, masked=text, mask_spans=spans)

    def unmask(self) -> str:
        """Rebuild the original sentence from the masked form and the spans."""
        pieces = []
        pos = 0
        shift = 0
        for (start, end) in self.mask_spans:
            at = start - shift
            pieces.append(self.masked[pos:at])
            pieces.append(self.original[start:end])
            pos = at + len(MASK)
            shift += (end - start) - len(MASK)
        pieces.append(self.masked[pos:])
        return "".join(pieces)


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    distance: int
    max_len: int

    def __float__(self) -> float:
        return self.value


def normalize(text: str) -> str:
    """Fold case and collapse runs of whitespace to a single space."""
    return " ".join(text.lower().split())


def levenshtein_distance(a: str, b: str) -> int:
    return Levenshtein.distance(a, b)


def levenshtein_similarity(a: MaskedSentence, b: MaskedSentence) -> SimilarityScore:
    left = normalize(a.masked)
    right = normalize(b.masked)
    max_len = max(len(left), len(right))
    distance = levenshtein_distance(left, right)
    if max_len == 0:
        return SimilarityScore(value=1.0, distance=0, max_len=0)
    return SimilarityScore(
        value=1.0 - distance / max_len, distance=distance, max_len=max_len
    )


def mask_entities(
    s: str,
    masker: EntityMasker,
    fallback: Optional[EntityMasker] = None,
    logger: Optional[StageLogger] = None,
) -> MaskedSentence:
    if s == "":
        return MaskedSentence(original="", masked="")
    try:
        spans = masker.mask(s)
    except MaskerUnavailable as e:
        if fallback is None:
            raise
        if logger:
            logger.warn("masker failed ({0}), using fallback masker".format(e))
        spans = fallback.mask(s)
    return MaskedSentence.from_spans(s, spans)


def spans_from_masked(original: str, masked: str) -> Tuple[Span, ...]:
    """Recover the entity spans of ‘original’ given its masked rendering.

    The literal text between mask tokens must appear in ‘original’ in
    order; each mask token covers whatever lies in between.
    """
    if masked == original:
        return ()
    literals = masked.split(MASK)
    spans: List[Span] = []
    if not original.startswith(literals[0]):
        raise InvalidMask("masked form ‘{0}’ does not match ‘{1}’".format(masked, original))
    pos = len(literals[0])
    for i, literal in enumerate(literals[1:]):
        last = i == len(literals) - 2
        if last:
            if not original.endswith(literal) or len(original) - len(literal) < pos:
                raise InvalidMask(
                    "masked form ‘{0}’ does not match ‘{1}’".format(masked, original)
                )
            found = len(original) - len(literal)
        else:
            found = original.find(literal, pos + 1) if literal else pos + 1
            if found < 0:
                raise InvalidMask(
                    "masked form ‘{0}’ does not match ‘{1}’".format(masked, original)
                )
        if found <= pos:
            raise InvalidMask("empty mask span in ‘{0}’".format(masked))
        spans.append((pos, found))
        pos = found + len(literal)
    return tuple(spans)


class _RowTask(NamedTuple):
    name: str
    index: int


def similarity_matrix(
    sentences: Sequence[MaskedSentence], nr_workers: int = 1
) -> np.ndarray:
    """Symmetric matrix of similarity values, one row computed per task."""
    n = len(sentences)
    normed = [MaskedSentence.premasked(normalize(s.masked)) for s in sentences]

    def row(task: _RowTask) -> List[float]:
        i = task.index
        return [
            levenshtein_similarity(normed[i], normed[j]).value for j in range(i + 1, n)
        ]

    rows = run_tasks(
        nr_workers, [_RowTask("row-{0}".format(i), i) for i in range(n)], row
    )
    matrix = np.eye(n)
    for i, values in enumerate(rows):
        for offset, value in enumerate(values):
            j = i + 1 + offset
            matrix[i, j] = matrix[j, i] = value
    return matrix
