# -*- coding: utf-8 -*-

import json
import logging
import os
import sys
import time
from io import StringIO
from typing import Any, Callable, Optional, TextIO, Tuple, Type, TypeVar

from unlearnlab.logger import StageLogger

T = TypeVar("T")


class LabError(Exception):
    """Base class of every domain error raised by unlearnlab."""

    pass


def retry(
    call: Callable[[], T],
    attempts: int = 3,
    initial: float = 0.5,
    factor: float = 2.0,
    retry_on: Tuple[Type[BaseException], ...] = (Exception,),
    logger: Optional[StageLogger] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> T:
    """Call ‘call’ until it succeeds, sleeping with exponential backoff in between.

    The last exception is re-raised once ‘attempts’ calls have failed.
    """
    if attempts < 1:
        raise ValueError("attempts must be at least 1")
    wait = initial
    tries = 0
    while True:
        tries = tries + 1
        try:
            return call()
        except retry_on as e:
            if tries >= attempts:
                raise
            if logger:
                logger.warn(
                    "attempt {0}/{1} failed ({2}), retrying in {3:g}s".format(
                        tries, attempts, e, wait
                    )
                )
            sleep(wait)
            wait = wait * factor


def canonical_json(obj: Any) -> str:
    """Serialise ‘obj’ so that equal values always give the same text."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def pretty_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_file_atomic(path: str, contents: str) -> None:
    """Write ‘contents’ to ‘path’ through a temporary file and a rename."""
    basedir = os.path.dirname(path)
    if basedir and not os.path.exists(basedir):
        os.makedirs(basedir)
    tmp = "{0}.tmp-{1}".format(path, os.getpid())
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(contents)
    os.replace(tmp, path)


def resolve_path(workdir: Optional[str], path: str) -> str:
    if workdir is None or os.path.isabs(path):
        return path
    return os.path.join(workdir, path)


class TeeStderr(StringIO):
    stderr: TextIO

    def __init__(self) -> None:
        StringIO.__init__(self)
        self.stderr = sys.stderr
        self.logger = logging.getLogger("unlearnlab")
        sys.stderr = self

    def __del__(self) -> None:
        sys.stderr = self.stderr

    def write(self, data: str) -> int:
        ret = self.stderr.write(data)
        for l in data.split("\n"):
            if l:
                self.logger.warning(l)
        return ret

    def fileno(self) -> int:
        return self.stderr.fileno()

    def isatty(self) -> bool:
        return self.stderr.isatty()

    def flush(self) -> None:
        self.stderr.flush()


class TeeStdout(StringIO):
    stdout: TextIO

    def __init__(self) -> None:
        StringIO.__init__(self)
        self.stdout = sys.stdout
        self.logger = logging.getLogger("unlearnlab")
        sys.stdout = self

    def __del__(self) -> None:
        sys.stdout = self.stdout

    def write(self, data: str) -> int:
        ret = self.stdout.write(data)
        for l in data.split("\n"):
            if l:
                self.logger.info(l)
        return ret

    def fileno(self) -> int:
        return self.stdout.fileno()

    def isatty(self) -> bool:
        return self.stdout.isatty()

    def flush(self) -> None:
        self.stdout.flush()
