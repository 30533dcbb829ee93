# -*- coding: utf-8 -*-
"""Ports for every external capability: generation, token scoring,
embeddings, NLI judgements, entity masking and QA generation.

A port is a typed facade (`TextGenerator`, `TokenScorer`, ...) over a
transport that speaks the JSON request/response shapes of the wire
protocol. Offline adapters subclass the facades and override the typed
methods directly.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Any,
    Callable,
    Dict,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    TypeVar,
)

import numpy as np

from unlearnlab.parallel import run_tasks
from unlearnlab.util import LabError


class PortError(LabError):
    pass


class PortUnavailable(PortError):
    pass


class Timeout(PortUnavailable):
    pass


class ProtocolError(PortError):
    pass


class LengthZero(PortError):
    pass


class FixtureMiss(PortError):
    pass


class MaskerUnavailable(PortUnavailable):
    pass


class PortConfigError(PortError):
    pass


class PortKind(str, Enum):
    TEXT_GENERATOR = "text_generator"
    TOKEN_SCORER = "token_scorer"
    EMBEDDER = "embedder"
    NLI_JUDGE = "nli_judge"
    ENTITY_MASKER = "entity_masker"
    QA_GENERATOR = "qa_generator"


class NLILabel(str, Enum):
    ENTAILMENT = "entailment"
    NEUTRAL = "neutral"
    CONTRADICTION = "contradiction"


@dataclass(frozen=True)
class Capabilities:
    max_concurrency: int = 1
    deterministic: bool = True


@dataclass(frozen=True)
class PortDescriptor:
    kind: PortKind
    endpoint: str
    capabilities: Capabilities = field(default_factory=Capabilities)

    def __post_init__(self) -> None:
        if self.capabilities.max_concurrency < 1:
            raise PortConfigError(
                "port ‘{0}’ needs max_concurrency ≥ 1".format(self.kind.value)
            )
        if self.is_fixture() and not self.capabilities.deterministic:
            raise PortConfigError(
                "fixture-backed port ‘{0}’ must be deterministic".format(
                    self.kind.value
                )
            )

    def scheme(self) -> str:
        return self.endpoint.split(":", 1)[0] if ":" in self.endpoint else ""

    def location(self) -> str:
        return self.endpoint.split(":", 1)[1] if ":" in self.endpoint else ""

    def is_fixture(self) -> bool:
        return self.scheme() == "fixture"

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> PortDescriptor:
        caps = d.get("capabilities", {})
        return cls(
            kind=PortKind(d["kind"]),
            endpoint=d["endpoint"],
            capabilities=Capabilities(
                max_concurrency=int(caps.get("max_concurrency", 1)),
                deterministic=bool(caps.get("deterministic", True)),
            ),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "endpoint": self.endpoint,
            "capabilities": {
                "max_concurrency": self.capabilities.max_concurrency,
                "deterministic": self.capabilities.deterministic,
            },
        }


class Transport(object):
    """Carries one JSON request to an implementation and returns its JSON reply."""

    def call(self, op: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        raise NotImplementedError("call")

    def close(self) -> None:
        pass


class Port(object):
    """Base class of all port adapters."""

    @classmethod
    def get_kind(cls) -> PortKind:
        """The port kind this adapter serves"""
        raise NotImplementedError("get_kind")

    def __init__(
        self,
        descriptor: Optional[PortDescriptor] = None,
        transport: Optional[Transport] = None,
    ) -> None:
        if descriptor is None:
            descriptor = PortDescriptor(kind=self.get_kind(), endpoint="builtin:")
        self.descriptor = descriptor
        self.transport = transport
        self._slots = threading.BoundedSemaphore(
            descriptor.capabilities.max_concurrency
        )

    @property
    def max_concurrency(self) -> int:
        return self.descriptor.capabilities.max_concurrency

    def call(self, op: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        if self.transport is None:
            raise PortUnavailable(
                "port ‘{0}’ has no transport for ‘{1}’".format(
                    self.get_kind().value, op
                )
            )
        with self._slots:
            reply = self.transport.call(op, payload)
        if not isinstance(reply, dict):
            raise ProtocolError("reply to ‘{0}’ is not a JSON object".format(op))
        return reply

    def close(self) -> None:
        if self.transport is not None:
            self.transport.close()


def _field(reply: Dict[str, Any], name: str, op: str) -> Any:
    if name not in reply:
        raise ProtocolError("reply to ‘{0}’ lacks field ‘{1}’".format(op, name))
    return reply[name]


class TextGenerator(Port):
    @classmethod
    def get_kind(cls) -> PortKind:
        return PortKind.TEXT_GENERATOR

    def generate(self, prompt: str, max_tokens: int = 64) -> str:
        reply = self.call("generate", {"prompt": prompt, "max_tokens": max_tokens})
        text = _field(reply, "text", "generate")
        if not isinstance(text, str):
            raise ProtocolError("generated text is not a string")
        return text


class TokenScorer(Port):
    @classmethod
    def get_kind(cls) -> PortKind:
        return PortKind.TOKEN_SCORER

    def score(self, prompt: str, target: str) -> List[float]:
        if target == "":
            raise LengthZero("cannot score an empty target")
        reply = self.call("score", {"prompt": prompt, "target": target})
        probs = _field(reply, "token_probs", "score")
        if not isinstance(probs, list) or not probs:
            raise ProtocolError("token_probs must be a non-empty list")
        out = []
        for p in probs:
            if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0.0 < p <= 1.0:
                raise ProtocolError("token probability ‘{0}’ outside (0, 1]".format(p))
            out.append(float(p))
        return out


class Embedder(Port):
    @classmethod
    def get_kind(cls) -> PortKind:
        return PortKind.EMBEDDER

    def embed(self, text: str) -> np.ndarray:
        reply = self.call("embed", {"text": text})
        vector = np.asarray(_field(reply, "vector", "embed"), dtype=float)
        if vector.ndim != 1 or vector.size == 0:
            raise ProtocolError("embedding must be a non-empty vector")
        if not np.all(np.isfinite(vector)) or not np.any(vector):
            raise ProtocolError("embedding is zero or not finite")
        return vector


class NLIJudge(Port):
    @classmethod
    def get_kind(cls) -> PortKind:
        return PortKind.NLI_JUDGE

    def nli(self, premise: str, hypothesis: str) -> NLILabel:
        reply = self.call("nli", {"premise": premise, "hypothesis": hypothesis})
        label = _field(reply, "label", "nli")
        try:
            return NLILabel(label)
        except ValueError:
            raise ProtocolError("unknown NLI label ‘{0}’".format(label))


class EntityMasker(Port):
    @classmethod
    def get_kind(cls) -> PortKind:
        return PortKind.ENTITY_MASKER

    def mask(self, text: str) -> List[Tuple[int, int]]:
        """Character spans of the entities in ‘text’."""
        try:
            reply = self.call("mask", {"text": text})
        except PortUnavailable as e:
            raise MaskerUnavailable(str(e))
        spans = _field(reply, "spans", "mask")
        try:
            return [(int(s), int(e)) for (s, e) in spans]
        except (TypeError, ValueError):
            raise ProtocolError("spans must be a list of [start, end] pairs")


class GeneratedQA(NamedTuple):
    question: str
    answer: str
    aliases: Tuple[str, ...]


class QAGenerator(Port):
    @classmethod
    def get_kind(cls) -> PortKind:
        return PortKind.QA_GENERATOR

    def fill(self, template: str, entity: str) -> Optional[GeneratedQA]:
        """A question about ‘entity’ shaped like ‘template’, or None when
        nothing is known about the entity for this template."""
        reply = self.call("fill", {"template": template, "entity": entity})
        if reply.get("question") is None:
            return None
        return GeneratedQA(
            question=str(reply["question"]),
            answer=str(_field(reply, "answer", "fill")),
            aliases=tuple(str(a) for a in reply.get("aliases", [])),
        )


KIND_CLASSES = {
    PortKind.TEXT_GENERATOR: TextGenerator,
    PortKind.TOKEN_SCORER: TokenScorer,
    PortKind.EMBEDDER: Embedder,
    PortKind.NLI_JUDGE: NLIJudge,
    PortKind.ENTITY_MASKER: EntityMasker,
    PortKind.QA_GENERATOR: QAGenerator,
}

Item = TypeVar("Item")
Reply = TypeVar("Reply")


class _Request(NamedTuple):
    name: str
    item: Any


def fan_out(
    port: Port, items: Sequence[Tuple[str, Item]], fn: Callable[[Item], Reply]
) -> Dict[str, Reply]:
    """Apply ‘fn’ to every (id, item) pair with at most the port's
    concurrency in flight, returning replies keyed by request id."""
    ids = [i for (i, _) in items]
    if len(set(ids)) != len(ids):
        raise PortError("request ids passed to a port must be unique")
    replies = run_tasks(
        port.max_concurrency,
        [_Request(i, item) for (i, item) in items],
        lambda req: (req.name, fn(req.item)),
    )
    return dict(replies)
