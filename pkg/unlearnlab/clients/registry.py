# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import Any, Dict, Optional, Type

from unlearnlab.clients import (
    KIND_CLASSES,
    Port,
    PortConfigError,
    PortDescriptor,
    PortKind,
    TextGenerator,
    Transport,
)
from unlearnlab.clients.fixtures import RECORD, REPLAY, FixtureStore, FixtureTransport
from unlearnlab.clients.llm import LLMEntityMasker, LLMQAGenerator
from unlearnlab.clients.remote import HttpTransport
from unlearnlab.logger import StageLogger


def adapters() -> Dict[str, Type[Port]]:
    """All adapters registered through the ``ports`` hook, by name."""
    from unlearnlab.plugins import get_plugin_manager

    found: Dict[str, Type[Port]] = {}
    for registered in get_plugin_manager().hook.ports():
        found.update(registered or {})
    return found


def _transport(
    descriptor: PortDescriptor,
    fixtures_dir: Optional[str],
    record: bool,
    logger: Optional[StageLogger],
) -> Transport:
    scheme = descriptor.scheme()
    if scheme == "fixture":
        return FixtureTransport(
            FixtureStore(descriptor.location()), descriptor.kind.value, REPLAY
        )
    if scheme not in ("http", "https"):
        raise PortConfigError(
            "unsupported endpoint ‘{0}’ for port ‘{1}’".format(
                descriptor.endpoint, descriptor.kind.value
            )
        )
    if fixtures_dir is None:
        return HttpTransport(descriptor, logger=logger)
    store = FixtureStore(fixtures_dir)
    if record:
        return FixtureTransport(
            store,
            descriptor.kind.value,
            RECORD,
            live=HttpTransport(descriptor, logger=logger),
        )
    return FixtureTransport(store, descriptor.kind.value, REPLAY)


def open_port(
    descriptor: PortDescriptor,
    fixtures_dir: Optional[str] = None,
    record: bool = False,
    logger: Optional[StageLogger] = None,
    **options: Any
) -> Port:
    """Instantiate the adapter a descriptor points at.

    ``builtin:<name>`` selects a registered adapter (``options`` go to its
    constructor), ``fixture:<dir>`` replays recorded responses, and
    ``http(s)://`` talks to a server. When ‘fixtures_dir’ is set a server
    endpoint is replayed from there instead, or recorded into it when
    ‘record’ is true.
    """
    if descriptor.scheme() == "builtin":
        name = descriptor.location()
        known = adapters()
        if name not in known:
            raise PortConfigError(
                "no adapter named ‘{0}’ (known: {1})".format(
                    name, ", ".join(sorted(known))
                )
            )
        cls = known[name]
        if cls.get_kind() != descriptor.kind:
            raise PortConfigError(
                "adapter ‘{0}’ serves ‘{1}’, not ‘{2}’".format(
                    name, cls.get_kind().value, descriptor.kind.value
                )
            )
        return cls(descriptor=descriptor, **options)  # type: ignore

    transport = _transport(descriptor, fixtures_dir, record, logger)
    live_llm = descriptor.scheme() in ("http", "https") and descriptor.kind in (
        PortKind.ENTITY_MASKER,
        PortKind.QA_GENERATOR,
    )
    if live_llm:
        # Masking and QA generation have no endpoint of their own; they
        # run as prompts against the server's generator.
        generator = TextGenerator(
            PortDescriptor(
                kind=PortKind.TEXT_GENERATOR,
                endpoint=descriptor.endpoint,
                capabilities=descriptor.capabilities,
            ),
            transport,
        )
        if descriptor.kind == PortKind.ENTITY_MASKER:
            return LLMEntityMasker(generator, descriptor=descriptor)
        return LLMQAGenerator(generator, descriptor=descriptor)
    return KIND_CLASSES[descriptor.kind](descriptor, transport)
