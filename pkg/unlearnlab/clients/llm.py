# -*- coding: utf-8 -*-
"""Masking and QA generation delegated to an instruction-following model
reached through a TextGenerator port. Prompts live in ``prompts/``.

The prompts ask for JSON, but models answering them tend to echo the
Python-literal quoting of the examples they show, so replies are read as
JSON first and as a Python literal second.
"""
from __future__ import annotations

import ast
import json
import pkgutil
import re
from string import Template
from typing import Any, Dict, List, Mapping, Optional, Tuple

from unlearnlab.clients import (
    EntityMasker,
    GeneratedQA,
    MaskerUnavailable,
    PortDescriptor,
    PortUnavailable,
    ProtocolError,
    QAGenerator,
    TextGenerator,
)
from unlearnlab.textsim import (
    MASK,
    InvalidMask,
    MaskedSentence,
    levenshtein_similarity,
    spans_from_masked,
)

_STRUCTURED_RE = re.compile(r"[\[{].*[\]}]", re.DOTALL)

# Filled questions whose best match among the generated ones scores below
# this are treated as unanswered.
ANSWER_MATCH = 0.75


def load_prompt(name: str) -> Template:
    data = pkgutil.get_data("unlearnlab.clients", "prompts/{0}.txt".format(name))
    if data is None:
        raise ProtocolError("missing prompt asset ‘{0}’".format(name))
    return Template(data.decode("utf-8"))


def parse_reply(text: str) -> Any:
    """The outermost JSON array or object in a model reply."""
    m = _STRUCTURED_RE.search(text)
    if not m:
        raise ProtocolError("model reply carries no JSON: ‘{0}’".format(text))
    body = m.group()
    try:
        return json.loads(body, strict=False)
    except ValueError:
        pass
    try:
        return ast.literal_eval(body)
    except (ValueError, SyntaxError, RecursionError):
        raise ProtocolError("model reply is not valid JSON: ‘{0}’".format(text))


def parse_json_reply(text: str) -> Dict[str, Any]:
    obj = parse_reply(text)
    if not isinstance(obj, dict):
        raise ProtocolError("model reply is not a JSON object")
    return obj


def _entry_for(reply: Any, question: str) -> Dict[str, Any]:
    """The entry of a masking reply that answers ‘question’."""
    entries = [reply] if isinstance(reply, dict) else reply
    if not isinstance(entries, list):
        raise ProtocolError("masking reply is neither an object nor an array")
    entries = [e for e in entries if isinstance(e, dict)]
    for e in entries:
        if e.get("question") == question:
            return e
    if len(entries) == 1:
        return entries[0]
    raise ProtocolError("masking reply has no entry for ‘{0}’".format(question))


def format_template(template: str) -> str:
    """A cluster template in the lower-case ‘x’ notation the fill prompt uses."""
    return template.replace(MASK, "x")


class LLMEntityMasker(EntityMasker):
    def __init__(
        self, generator: TextGenerator, descriptor: Optional[PortDescriptor] = None
    ) -> None:
        EntityMasker.__init__(self, descriptor)
        self.generator = generator
        self.prompt = load_prompt("mask")

    def mask(self, text: str) -> List[Tuple[int, int]]:
        if text == "":
            return []
        try:
            reply = self.generator.generate(
                self.prompt.substitute(input=repr([{"question": text}])), max_tokens=256
            )
        except PortUnavailable as e:
            raise MaskerUnavailable(str(e))
        masked = _entry_for(parse_reply(reply), text).get("masked_question")
        if not isinstance(masked, str):
            raise ProtocolError("masker reply lacks ‘masked_question’")
        try:
            return list(spans_from_masked(text, masked))
        except InvalidMask as e:
            raise ProtocolError(str(e))


class LLMQAGenerator(QAGenerator):
    """Fills cluster templates with the fill prompt, then answers the
    filled question with the short-answer QA prompt.

    ‘passages’ maps entity names to reference text. Without one, the
    filled question itself stands in as the passage and the model answers
    from what it knows.
    """

    def __init__(
        self,
        generator: TextGenerator,
        descriptor: Optional[PortDescriptor] = None,
        passages: Optional[Mapping[str, str]] = None,
    ) -> None:
        QAGenerator.__init__(self, descriptor)
        self.generator = generator
        self.passages = dict(passages or {})
        self.fill_prompt = load_prompt("fill")
        self.qa_prompt = load_prompt("qa")

    def entity_questions(
        self, entity: str, passage: str, count: int = 40
    ) -> List[GeneratedQA]:
        """Short-answer questions about ‘entity’ drawn from ‘passage’; the
        first answer is the answer, the rest are its aliases."""
        reply = self.generator.generate(
            self.qa_prompt.substitute(name=entity, passage=passage, count=count),
            max_tokens=4096,
        )
        questions = parse_json_reply(reply).get("questions")
        if not isinstance(questions, list):
            raise ProtocolError("QA reply lacks a ‘questions’ array")
        out: List[GeneratedQA] = []
        for q in questions:
            if not isinstance(q, dict) or not isinstance(q.get("question"), str):
                continue
            answers = [str(a).strip() for a in q.get("answers") or [] if str(a).strip()]
            if q["question"].strip() and answers:
                out.append(GeneratedQA(q["question"].strip(), answers[0], tuple(answers[1:])))
        return out

    def fill(self, template: str, entity: str) -> Optional[GeneratedQA]:
        reply = self.generator.generate(
            self.fill_prompt.substitute(
                entity_names=entity, input=format_template(template)
            ),
            max_tokens=256,
        )
        question = parse_json_reply(reply).get("question")
        if not isinstance(question, str) or not question.strip():
            return None
        question = " ".join(question.split())
        candidates = self.entity_questions(entity, self.passages.get(entity, question))
        filled = MaskedSentence.premasked(question)
        best: Optional[GeneratedQA] = None
        best_score = ANSWER_MATCH
        for c in candidates:
            score = levenshtein_similarity(MaskedSentence.premasked(c.question), filled).value
            if score >= best_score:
                (best, best_score) = (c, score)
        if best is None:
            return None
        return GeneratedQA(question=question, answer=best.answer, aliases=best.aliases)
