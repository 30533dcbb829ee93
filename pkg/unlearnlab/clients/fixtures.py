# -*- coding: utf-8 -*-
"""Content-addressed record/replay fixtures.

Each port kind owns one JSONL file ``<dir>/<kind>.jsonl``. A line holds
the SHA-256 key of the canonical request, the request itself and the
recorded response. Files are rewritten sorted by key so recorded corpora
diff cleanly.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from typing import Any, Dict, Optional

from unlearnlab.clients import FixtureMiss, PortConfigError, ProtocolError, Transport
from unlearnlab.util import canonical_json, write_file_atomic

FIXTURES_ENV = "UNLEARN_LAB_FIXTURES"

REPLAY = "replay"
RECORD = "record"


def request_key(kind: str, op: str, payload: Dict[str, Any]) -> str:
    blob = canonical_json({"kind": kind, "op": op, "request": payload})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class FixtureStore(object):
    def __init__(self, directory: str) -> None:
        self.directory = directory
        self._lock = threading.Lock()
        self._records: Dict[str, Dict[str, Dict[str, Any]]] = {}

    def path_for(self, kind: str) -> str:
        return os.path.join(self.directory, "{0}.jsonl".format(kind))

    def _load(self, kind: str) -> Dict[str, Dict[str, Any]]:
        if kind in self._records:
            return self._records[kind]
        records: Dict[str, Dict[str, Any]] = {}
        path = self.path_for(kind)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                for n, line in enumerate(f, 1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        records[rec["key"]] = rec
                    except (ValueError, KeyError):
                        raise ProtocolError(
                            "malformed fixture line {0} in ‘{1}’".format(n, path)
                        )
        self._records[kind] = records
        return records

    def lookup(self, kind: str, op: str, payload: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        with self._lock:
            rec = self._load(kind).get(request_key(kind, op, payload))
        return None if rec is None else rec["response"]

    def put(
        self, kind: str, op: str, payload: Dict[str, Any], response: Dict[str, Any]
    ) -> None:
        key = request_key(kind, op, payload)
        with self._lock:
            records = self._load(kind)
            records[key] = {
                "key": key,
                "op": op,
                "request": payload,
                "response": response,
            }
            lines = [canonical_json(records[k]) for k in sorted(records)]
            write_file_atomic(self.path_for(kind), "\n".join(lines) + "\n")


class FixtureTransport(Transport):
    """Answers requests from a FixtureStore.

    In replay mode a miss is a hard error and nothing else is contacted;
    in record mode a miss goes to ‘live’ and the reply is stored.
    """

    def __init__(
        self,
        store: FixtureStore,
        kind: str,
        mode: str = REPLAY,
        live: Optional[Transport] = None,
    ) -> None:
        if mode not in (REPLAY, RECORD):
            raise PortConfigError("unknown fixture mode ‘{0}’".format(mode))
        if mode == RECORD and live is None:
            raise PortConfigError("record mode needs a live transport")
        self.store = store
        self.kind = kind
        self.mode = mode
        self.live = live

    def call(self, op: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        response = self.store.lookup(self.kind, op, payload)
        if response is not None:
            return response
        if self.mode == REPLAY or self.live is None:
            raise FixtureMiss(
                "no fixture for ‘{0}’ request {1} in ‘{2}’".format(
                    op,
                    request_key(self.kind, op, payload)[:12],
                    self.store.path_for(self.kind),
                )
            )
        response = self.live.call(op, payload)
        self.store.put(self.kind, op, payload, response)
        return response

    def close(self) -> None:
        if self.live is not None:
            self.live.close()
