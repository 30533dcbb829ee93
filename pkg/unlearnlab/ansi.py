import sys
from typing import TextIO


def _paint(code: str, s: str, outfile: TextIO) -> str:
    if not outfile.isatty():
        return s
    return "\033[1;{0}m{1}\033[0m".format(code, s)


def ansi_highlight(s: str, outfile: TextIO = sys.stderr) -> str:
    return _paint("35", s, outfile)


def ansi_warn(s: str, outfile: TextIO = sys.stderr) -> str:
    return _paint("33", s, outfile)


def ansi_error(s: str, outfile: TextIO = sys.stderr) -> str:
    return _paint("31", s, outfile)


def ansi_success(s: str, outfile: TextIO = sys.stderr) -> str:
    return _paint("32", s, outfile)
