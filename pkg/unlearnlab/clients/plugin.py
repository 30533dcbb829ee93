"""Adapters shipped with unlearnlab, reachable as ``builtin:<name>``."""
from unlearnlab.plugins import hookimpl


@hookimpl
def ports():
    from unlearnlab.clients.llm import LLMEntityMasker, LLMQAGenerator
    from unlearnlab.clients.offline import (
        HashingEmbedder,
        LexicalNLIJudge,
        RuleBasedMasker,
        TemplateQAGenerator,
    )

    return {
        "rules": RuleBasedMasker,
        "answer-table": TemplateQAGenerator,
        "lexical-nli": LexicalNLIJudge,
        "hashing": HashingEmbedder,
        "llm-masker": LLMEntityMasker,
        "llm-qa": LLMQAGenerator,
    }
