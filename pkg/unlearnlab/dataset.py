# -*- coding: utf-8 -*-
"""QA records, evaluation logs and their JSONL persistence."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from unlearnlab.clients import NLILabel
from unlearnlab.util import LabError, canonical_json, write_file_atomic

_NLI_LABELS = frozenset(label.value for label in NLILabel)


class DatasetError(LabError):
    pass


class SetKind(str, Enum):
    FORGET = "forget"
    DOMAIN_NEIGHBOR = "domain_neighbor"
    ENTITY_NEIGHBOR = "entity_neighbor"
    SYN_SIMILAR_NEIGHBOR = "syn_similar_neighbor"
    SYN_DIFFERENT_NEIGHBOR = "syn_different_neighbor"


NEIGHBOR_KINDS = (
    SetKind.DOMAIN_NEIGHBOR,
    SetKind.ENTITY_NEIGHBOR,
    SetKind.SYN_SIMILAR_NEIGHBOR,
    SetKind.SYN_DIFFERENT_NEIGHBOR,
)


class Category(str, Enum):
    HUMAN = "human"
    COMPANY = "company"
    CREATIVE_WORKS = "creative_works"
    FICTIONAL_CHARACTER = "fictional_character"
    PRODUCT = "product"


@dataclass(frozen=True)
class QAPair:
    id: str
    entity: str
    question: str
    answer: str
    aliases: Tuple[str, ...] = ()
    set_kind: SetKind = SetKind.FORGET
    cluster_id: Optional[int] = None
    category: Optional[Category] = None
    paraphrase_of: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise DatasetError("record ‘{0}’ has an empty question".format(self.id))
        if self.set_kind == SetKind.SYN_SIMILAR_NEIGHBOR and self.cluster_id is None:
            raise DatasetError(
                "syntactically similar record ‘{0}’ lacks a cluster id".format(self.id)
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "entity": self.entity,
            "question": self.question,
            "answer": self.answer,
            "aliases": list(self.aliases),
            "set_kind": self.set_kind.value,
            "cluster_id": self.cluster_id,
            "category": None if self.category is None else self.category.value,
            "paraphrase_of": self.paraphrase_of,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> QAPair:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DatasetError(
                "unknown fields in record ‘{0}’: {1}".format(
                    d.get("id"), ", ".join(sorted(unknown))
                )
            )
        try:
            return cls(
                id=str(d["id"]),
                entity=str(d["entity"]),
                question=str(d["question"]),
                answer=str(d["answer"]),
                aliases=tuple(str(a) for a in d.get("aliases") or ()),
                set_kind=SetKind(d.get("set_kind", SetKind.FORGET.value)),
                cluster_id=None if d.get("cluster_id") is None else int(d["cluster_id"]),
                category=None if d.get("category") is None else Category(d["category"]),
                paraphrase_of=d.get("paraphrase_of"),
            )
        except KeyError as e:
            raise DatasetError("record ‘{0}’ lacks field {1}".format(d.get("id"), e))
        except ValueError as e:
            raise DatasetError("record ‘{0}’: {1}".format(d.get("id"), e))


@dataclass(frozen=True)
class EvalRecord:
    """One model output for one QA record."""

    id: str
    model_tag: str
    generation: str
    token_probs: Tuple[float, ...]
    embedding: Optional[Tuple[float, ...]] = None
    nli_label: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "id": self.id,
            "model_tag": self.model_tag,
            "generation": self.generation,
            "token_probs": list(self.token_probs),
        }
        if self.embedding is not None:
            d["embedding"] = list(self.embedding)
        if self.nli_label is not None:
            d["nli_label"] = self.nli_label
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> EvalRecord:
        label = d.get("nli_label")
        if label is not None and label not in _NLI_LABELS:
            raise DatasetError(
                "log record ‘{0}’ has unknown nli_label ‘{1}’".format(d.get("id"), label)
            )
        try:
            return cls(
                id=str(d["id"]),
                model_tag=str(d["model_tag"]),
                generation=str(d["generation"]),
                token_probs=tuple(float(p) for p in d["token_probs"]),
                embedding=None
                if d.get("embedding") is None
                else tuple(float(x) for x in d["embedding"]),
                nli_label=label,
            )
        except KeyError as e:
            raise DatasetError("log record ‘{0}’ lacks field {1}".format(d.get("id"), e))
        except (TypeError, ValueError) as e:
            raise DatasetError("log record ‘{0}’: {1}".format(d.get("id"), e))


def _read_lines(path: str) -> Iterable[Tuple[int, Dict[str, Any]]]:
    try:
        f = open(path, encoding="utf-8")
    except OSError as e:
        raise DatasetError("cannot read ‘{0}’: {1}".format(path, e.strerror))
    with f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield (n, json.loads(line))
            except ValueError:
                raise DatasetError("line {0} of ‘{1}’ is not JSON".format(n, path))


def check_unique(pairs: Sequence[QAPair]) -> None:
    seen = set()
    for p in pairs:
        if p.id in seen:
            raise DatasetError("duplicate record id ‘{0}’".format(p.id))
        seen.add(p.id)


def read_pairs(path: str) -> List[QAPair]:
    pairs = [QAPair.from_dict(d) for (_, d) in _read_lines(path)]
    check_unique(pairs)
    return pairs


def dumps_pairs(pairs: Sequence[QAPair]) -> str:
    return "".join(canonical_json(p.to_dict()) + "\n" for p in pairs)


def write_pairs(path: str, pairs: Sequence[QAPair]) -> None:
    check_unique(pairs)
    write_file_atomic(path, dumps_pairs(pairs))


def read_log(path: str) -> List[EvalRecord]:
    return [EvalRecord.from_dict(d) for (_, d) in _read_lines(path)]


def write_log(path: str, records: Sequence[EvalRecord]) -> None:
    write_file_atomic(
        path, "".join(canonical_json(r.to_dict()) + "\n" for r in records)
    )


def read_lines(path: str) -> List[str]:
    """Plain text list, one item per non-empty line (entity lists)."""
    try:
        with open(path, encoding="utf-8") as f:
            return [l.strip() for l in f if l.strip()]
    except OSError as e:
        raise DatasetError("cannot read ‘{0}’: {1}".format(path, e.strerror))


def read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise DatasetError("cannot read ‘{0}’: {1}".format(path, e.strerror))
    except ValueError:
        raise DatasetError("‘{0}’ is not valid JSON".format(path))
