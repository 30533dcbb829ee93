# -*- coding: utf-8 -*-
from os import path

fixtures_dir = path.join(path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return path.join(fixtures_dir, name)
