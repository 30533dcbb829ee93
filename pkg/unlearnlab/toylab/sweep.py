# -*- coding: utf-8 -*-
"""Regularisation sweep: every method is unlearned once per combination
of regulariser and regularisation (train) set, and the utility drop is
read off every test set."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

from unlearnlab.dataset import SetKind
from unlearnlab.losses import Method, Regularizer
from unlearnlab.parallel import run_tasks
from unlearnlab.toylab import ToyLab

SWEEP_SETS = (
    SetKind.DOMAIN_NEIGHBOR,
    SetKind.ENTITY_NEIGHBOR,
    SetKind.SYN_SIMILAR_NEIGHBOR,
)

DEFAULT_METHODS = (Method.GA, Method.NPO, Method.IDK, Method.DPO)
DEFAULT_REGULARIZERS = (Regularizer.GD, Regularizer.KL)


@dataclass
class SweepCell:
    regularizer: Regularizer
    method: Method
    train: SetKind
    rud: Dict[str, float]
    reached: bool
    steps: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "regularizer": self.regularizer.value,
            "method": self.method.value,
            "train": self.train.value,
            "rud": dict(sorted(self.rud.items())),
            "reached": self.reached,
            "steps": self.steps,
        }


@dataclass
class SweepResult:
    cells: List[SweepCell] = field(default_factory=list)

    def regularizers(self) -> List[Regularizer]:
        seen: List[Regularizer] = []
        for c in self.cells:
            if c.regularizer not in seen:
                seen.append(c.regularizer)
        return seen

    def grid(self, regularizer: Regularizer) -> Dict[str, Dict[str, float]]:
        """grid[test][train]: utility drop on ‘test’ after regularising with
        ‘train’, averaged over methods."""
        out: Dict[str, Dict[str, float]] = {}
        for test in SWEEP_SETS:
            out[test.value] = {}
            for train in SWEEP_SETS:
                values = [
                    c.rud[test.value]
                    for c in self.cells
                    if c.regularizer == regularizer and c.train == train
                ]
                if values:
                    out[test.value][train.value] = math.fsum(values) / len(values)
        return out

    def to_csv(self, regularizer: Regularizer) -> str:
        grid = self.grid(regularizer)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["test\\train"] + [s.value for s in SWEEP_SETS])
        for test in SWEEP_SETS:
            writer.writerow(
                [test.value]
                + ["{0:.4f}".format(grid[test.value][train.value]) for train in SWEEP_SETS]
            )
        return buf.getvalue()

    def to_dict(self) -> Dict[str, object]:
        return {
            "cells": [c.to_dict() for c in self.cells],
            "grids": {r.value: self.grid(r) for r in self.regularizers()},
        }


class _CellTask(NamedTuple):
    name: str
    regularizer: Regularizer
    method: Method
    train: SetKind


def regularization_sweep(
    lab: ToyLab,
    methods: Sequence[Method] = DEFAULT_METHODS,
    regularizers: Sequence[Regularizer] = DEFAULT_REGULARIZERS,
    max_steps: Optional[int] = None,
    nr_workers: int = 1,
) -> SweepResult:
    """Run the 3×3 train/test grid for every regulariser.

    Cells run concurrently on copies of the fitted model and stop where
    forget efficacy enters the band; runs that miss it still contribute
    their last state.
    """
    tasks = [
        _CellTask("{0}/{1}/{2}".format(r.value, m.value, t.value), r, m, t)
        for r in regularizers
        for m in methods
        for t in SWEEP_SETS
    ]

    def cell(task: _CellTask) -> SweepCell:
        run = lab.run(
            lab.spec_for(task.method, task.regularizer),
            train=task.train,
            max_steps=max_steps,
            allow_partial=True,
            refine_idk=False,
        )
        rud = run.trace.rud()
        return SweepCell(
            regularizer=task.regularizer,
            method=task.method,
            train=task.train,
            rud={s.value: rud[s.value] for s in SWEEP_SETS},
            reached=run.trace.reached,
            steps=len(run.trace.steps) - 1,
        )

    return SweepResult(cells=run_tasks(nr_workers, tasks, cell))
