# -*- coding: utf-8 -*-
"""Desk-scale unlearning laboratory.

``ToyLab.prepare`` builds the templated corpus, fits the toy model until
it answers every fact and checks it with the probe filter; ``run`` then
unlearns the forget set with one objective and summarises the utility
drop on each neighbor set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

from unlearnlab.config import ToyConfig
from unlearnlab.dataset import SetKind
from unlearnlab.logger import Logger
from unlearnlab.losses import LossSpec, Method, Regularizer
from unlearnlab.metrics import GroupKey, ScoredExample, rud_by_group
from unlearnlab.neighborset import Thresholds, probe_filter
from unlearnlab.toylab.corpus import (
    TEST,
    TRAIN,
    ToyCorpus,
    ToyFact,
    ToyGenerator,
    build_toy_corpus,
)
from unlearnlab.toylab.model import ToyModel, fit_initial
from unlearnlab.toylab.unlearn import (
    BandNeverReached,
    RunTrace,
    fact_metrics,
    forget_efficacy,
    idk_share,
    unlearn,
    utility,
)

NEIGHBOR_SETS = (
    SetKind.DOMAIN_NEIGHBOR,
    SetKind.ENTITY_NEIGHBOR,
    SetKind.SYN_SIMILAR_NEIGHBOR,
    SetKind.SYN_DIFFERENT_NEIGHBOR,
)

SYN_SIMILAR_PROBE = "syn_similar"
SYN_DIFFERENT_PROBE = "syn_different"


@dataclass
class ToyRun:
    spec: LossSpec
    lr: float
    model: ToyModel
    trace: RunTrace
    summary: Dict[str, Any]


class ToyLab(object):
    def __init__(
        self,
        corpus: ToyCorpus,
        model: ToyModel,
        config: ToyConfig,
        logger: Optional[Logger] = None,
    ) -> None:
        self.corpus = corpus
        self.model = model
        self.config = config
        self.logger = logger
        self.probe_dropped: List[str] = []

    @classmethod
    def prepare(
        cls,
        config: ToyConfig,
        seed: int = 0,
        th: Thresholds = Thresholds(),
        logger: Optional[Logger] = None,
    ) -> ToyLab:
        stage = logger.get_logger_for("corpus") if logger else None
        corpus = build_toy_corpus(seed, config.sizes, th, stage)
        fit_logger = logger.get_logger_for("fit") if logger else None
        model = fit_initial(
            corpus.init_model(seed, config.init_scale),
            corpus.facts,
            lr=config.fit_lr,
            epochs=config.fit_epochs,
            target_probability=config.target_probability,
            logger=fit_logger,
        )
        lab = cls(corpus, model, config, logger)
        (kept, dropped) = probe_filter(
            corpus.pairs(), ToyGenerator(model, corpus), logger=stage
        )
        lab.probe_dropped = [p.id for p in dropped]
        if dropped and stage:
            stage.warn("{0} records failed the probe after fitting".format(len(dropped)))
        return lab

    def eval_sets(self) -> Dict[str, List[ToyFact]]:
        """Test halves of the neighbor sets, keyed by set kind."""
        return {kind.value: self.corpus.select(kind, TEST) for kind in NEIGHBOR_SETS}

    def probe_sets(self) -> Dict[str, List[ToyFact]]:
        return {
            SYN_SIMILAR_PROBE: self.corpus.select(SetKind.SYN_SIMILAR_NEIGHBOR, TEST),
            SYN_DIFFERENT_PROBE: self.corpus.select(SetKind.SYN_DIFFERENT_NEIGHBOR, TEST),
        }

    def train_set(self, kind: Optional[SetKind]) -> List[ToyFact]:
        """Regularisation facts: the train half of one neighbor set, or of
        all of them."""
        if kind is not None:
            return self.corpus.select(kind, TRAIN)
        return [f for f in self.corpus.facts if f.split == TRAIN]

    def spec_for(self, method: Method, regularizer: Regularizer = Regularizer.NONE) -> LossSpec:
        beta = self.config.beta if method in (Method.NPO, Method.DPO) else None
        return LossSpec(method=method, regularizer=regularizer, beta=beta)

    def run(
        self,
        spec: LossSpec,
        lr: Optional[float] = None,
        train: Optional[SetKind] = None,
        max_steps: Optional[int] = None,
        allow_partial: bool = False,
        refine_idk: bool = True,
    ) -> ToyRun:
        """Unlearn the forget set with ‘spec’. IDK runs keep refining inside
        the band up to the configured IDK share unless ‘refine_idk’ is off."""
        lr = self.config.lr_for(spec.method) if lr is None else lr
        retain = self.train_set(train) if spec.regularizer != Regularizer.NONE else []
        stage = self.logger.get_logger_for(spec.label) if self.logger else None
        try:
            (model, trace) = unlearn(
                self.model,
                spec,
                self.corpus.forget,
                retain,
                lr=lr,
                max_steps=self.config.max_steps if max_steps is None else max_steps,
                fe_band=self.config.fe_band,
                eval_sets=self.eval_sets(),
                probe_sets=self.probe_sets(),
                idk_token=self.corpus.idk_token,
                idk_target=self.config.idk_share if refine_idk else 0.0,
                logger=stage,
            )
        except BandNeverReached as e:
            if not allow_partial:
                raise
            if stage:
                stage.warn(str(e))
            (model, trace) = (e.model, e.trace)
        return ToyRun(spec, lr, model, trace, self.summarize(model, trace, train))

    def scored(self, model: ToyModel, facts: Sequence[ToyFact]) -> List[ScoredExample]:
        return [
            ScoredExample(f.to_pair(), v) for (f, v) in zip(facts, fact_metrics(model, facts))
        ]

    def summarize(
        self, after: ToyModel, trace: RunTrace, train: Optional[SetKind] = None
    ) -> Dict[str, Any]:
        tested = [f for f in self.corpus.facts if f.split == TEST]
        paraphrases = [f for f in self.corpus.paraphrases if f.split == TEST]
        rud = {
            GroupKey.SET_KIND.value: rud_by_group(
                self.scored(self.model, tested), self.scored(after, tested), GroupKey.SET_KIND
            ),
            GroupKey.CATEGORY.value: rud_by_group(
                self.scored(self.model, tested), self.scored(after, tested), GroupKey.CATEGORY
            ),
            GroupKey.PARAPHRASE_GROUP.value: rud_by_group(
                self.scored(self.model, paraphrases),
                self.scored(after, paraphrases),
                GroupKey.PARAPHRASE_GROUP,
            ),
        }
        forget = self.corpus.forget
        return {
            "method": trace.label,
            "train_set": None if train is None else train.value,
            "steps": len(trace.steps) - 1,
            "reached": trace.reached,
            "forget_efficacy": {
                "before": forget_efficacy(self.model, forget),
                "after": forget_efficacy(after, forget),
            },
            "utility": {
                name: {"before": utility(self.model, facts), "after": utility(after, facts)}
                for (name, facts) in sorted(self.eval_sets().items())
            },
            "rud": rud,
            "idk_share": idk_share(after, forget, self.corpus.idk_token),
            "probe_dropped": list(self.probe_dropped),
        }
