# -*- coding: utf-8 -*-
"""JSON-over-HTTP transport: POST <endpoint>/<op> with the request object."""
from __future__ import annotations

from typing import Any, Dict, Optional

import requests

from unlearnlab.clients import (
    PortDescriptor,
    PortUnavailable,
    ProtocolError,
    Timeout,
    Transport,
)
from unlearnlab.logger import StageLogger
from unlearnlab.util import retry

# Calls that may be repeated without changing what the server computes.
IDEMPOTENT_OPS = frozenset(["score", "embed", "nli", "mask", "fill"])


class HttpTransport(Transport):
    def __init__(
        self,
        descriptor: PortDescriptor,
        timeout: float = 60.0,
        attempts: int = 3,
        backoff: float = 0.5,
        logger: Optional[StageLogger] = None,
    ) -> None:
        self.descriptor = descriptor
        self.base_url = descriptor.endpoint.rstrip("/")
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self.logger = logger
        self.session = requests.Session()

    def is_idempotent(self, op: str) -> bool:
        if op == "generate":
            return self.descriptor.capabilities.deterministic
        return op in IDEMPOTENT_OPS

    def _post(self, op: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        url = "{0}/{1}".format(self.base_url, op)
        try:
            resp = self.session.post(url, json=payload, timeout=self.timeout)
        except requests.Timeout:
            raise Timeout("request to ‘{0}’ timed out".format(url))
        except requests.ConnectionError as e:
            raise PortUnavailable("cannot reach ‘{0}’: {1}".format(url, e))
        if resp.status_code >= 500:
            raise PortUnavailable(
                "‘{0}’ answered with status {1}".format(url, resp.status_code)
            )
        if resp.status_code != 200:
            raise ProtocolError(
                "‘{0}’ answered with status {1}".format(url, resp.status_code)
            )
        try:
            body = resp.json()
        except ValueError:
            raise ProtocolError("‘{0}’ did not answer with JSON".format(url))
        if not isinstance(body, dict):
            raise ProtocolError("‘{0}’ did not answer with a JSON object".format(url))
        return body

    def call(self, op: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        return retry(
            lambda: self._post(op, payload),
            attempts=self.attempts if self.is_idempotent(op) else 1,
            initial=self.backoff,
            retry_on=(PortUnavailable,),
            logger=self.logger,
        )

    def close(self) -> None:
        self.session.close()
