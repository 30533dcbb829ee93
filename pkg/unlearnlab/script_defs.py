# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
import os
import sys
from argparse import ArgumentParser, Namespace, _SubParsersAction
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import prettytable

import unlearnlab.util
from unlearnlab import report as reports
from unlearnlab.ansi import ansi_warn
from unlearnlab.clients import PortKind
from unlearnlab.clients.offline import AnswerEntry
from unlearnlab.config import ConfigError, RunConfig, load_config
from unlearnlab.dataset import (
    EvalRecord,
    QAPair,
    SetKind,
    read_json,
    read_lines,
    read_log,
    read_pairs,
    write_pairs,
)
from unlearnlab.logger import Logger
from unlearnlab.losses import LossError, LossSpec, Method, Regularizer
from unlearnlab.metrics import (
    PROBABILITY_MODES,
    build_report,
    relative_utility_drop,
    score_records,
)
from unlearnlab.neighborset import (
    build_syn_similar_set,
    cluster_forget_questions,
    group_by_kind,
    set_statistics,
    validate_distinctness,
)
from unlearnlab.parallel import MultipleExceptions
from unlearnlab.plugins import get_plugin_manager
from unlearnlab.textsim import MaskedSentence, levenshtein_similarity, mask_entities
from unlearnlab.util import LabError, pretty_json, resolve_path, write_file_atomic

pm = get_plugin_manager()


def op_list_plugins(args: Namespace) -> None:
    if args.verbose:
        tbl = create_table([("Installed Plugins", "c"), ("Plugin Reference", "c")])
    else:
        tbl = create_table([("Installed Plugins", "c")])
    for plugin in sorted(pm.list_name_plugin()):
        if args.verbose:
            tbl.add_row([plugin[0], plugin[1].__str__()])
        else:
            tbl.add_row([plugin[0]])
    print(tbl)

    from unlearnlab.clients.registry import adapters

    tbl = create_table([("Adapter", "l"), ("Port kind", "l")])
    for (name, cls) in sorted(adapters().items()):
        tbl.add_row(["builtin:" + name, cls.get_kind().value])
    print(tbl)


def create_table(headers: List[Tuple[str, str]]) -> prettytable.PrettyTable:
    tbl = prettytable.PrettyTable([name for (name, align) in headers])
    for (name, align) in headers:
        tbl.align[name] = align
    return tbl


def get_logger() -> Logger:
    return Logger(sys.stderr)


def run_config(args: Namespace) -> RunConfig:
    """The configuration file with the command-line overrides applied."""
    config = load_config(path(args, args.config) if args.config else None)
    return apply_overrides(config, args)


def apply_overrides(config: RunConfig, args: Namespace) -> RunConfig:
    problems: List[str] = []
    changes: Dict[str, Any] = {}

    th = {
        name: getattr(args, name)
        for name in ("theta_high", "theta_low", "min_cluster_size")
        if getattr(args, name, None) is not None
    }
    if th:
        try:
            changes["thresholds"] = replace(config.thresholds, **th)
        except LabError as e:
            problems.append("thresholds: {0}".format(e))

    method = getattr(args, "method", None)
    reg = getattr(args, "reg", None)
    beta = getattr(args, "beta", None)
    if method is not None or reg is not None or beta is not None:
        m = Method(method) if method is not None else config.loss.method
        r = Regularizer(reg) if reg is not None else config.loss.regularizer
        if m in (Method.NPO, Method.DPO):
            b: Optional[float] = beta or config.loss.beta or config.toy.beta
        else:
            b = None
        try:
            changes["loss"] = LossSpec(m, r, b, config.loss.reg_weight)
        except LossError as e:
            problems.append("loss: {0}".format(e))

    mode = getattr(args, "probability_mode", None)
    if mode is not None:
        changes["probability_mode"] = mode
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        if args.workers < 1 and args.workers != -1:
            problems.append("workers: must be -1 or at least 1")
        changes["workers"] = args.workers
    if getattr(args, "record_fixtures", False):
        if config.fixtures is None:
            problems.append("--record-fixtures needs UNLEARN_LAB_FIXTURES to be set")
        changes["record"] = True
    if problems:
        raise ConfigError(problems)
    return replace(config, **changes)


def path(args: Namespace, p: str) -> str:
    return resolve_path(args.workdir, p)


def output_dir(args: Namespace, config: RunConfig) -> str:
    return path(args, args.output or config.paths.output)


def open_masker(args: Namespace, config: RunConfig, logger: Logger) -> Any:
    stage = logger.get_logger_for("masker")
    options: Dict[str, Any] = {}
    rules = config.ports[PortKind.ENTITY_MASKER].endpoint == "builtin:rules"
    if rules and getattr(args, "entities", None):
        options["entities"] = read_lines(path(args, args.entities))
    return config.open_port(PortKind.ENTITY_MASKER, stage, **options)


def open_qa_generator(args: Namespace, config: RunConfig, logger: Logger) -> Any:
    stage = logger.get_logger_for("qa")
    options: Dict[str, Any] = {}
    if config.ports[PortKind.QA_GENERATOR].endpoint == "builtin:answer-table":
        if not args.answers:
            raise ConfigError(["the answer-table QA generator needs --answers"])
        table = {}
        for r in read_json(path(args, args.answers)):
            table[(r["template"], r["entity"])] = AnswerEntry(
                answer=r["answer"], aliases=r.get("aliases", []), question=r.get("question")
            )
        options["table"] = table
    return config.open_port(PortKind.QA_GENERATOR, stage, **options)


def op_mask(args: Namespace) -> None:
    config = run_config(args)
    logger = get_logger()
    masker = open_masker(args, config, logger)
    if args.question is not None:
        print(mask_entities(args.question, masker).masked)
        return
    tbl = create_table([("ID", "l"), ("Masked question", "l")])
    for p in read_pairs(path(args, args.input)):
        tbl.add_row([p.id, mask_entities(p.question, masker).masked])
    print(tbl)


def op_sim(args: Namespace) -> None:
    if args.raw:
        config = run_config(args)
        masker = open_masker(args, config, get_logger())
        (a, b) = (mask_entities(args.a, masker), mask_entities(args.b, masker))
    else:
        (a, b) = (MaskedSentence.premasked(args.a), MaskedSentence.premasked(args.b))
    print(str(round(levenshtein_similarity(a, b).value, 4)))


def op_cluster(args: Namespace) -> None:
    config = run_config(args)
    logger = get_logger()
    masker = open_masker(args, config, logger)
    forget = [p for p in read_pairs(path(args, args.forget)) if p.set_kind == SetKind.FORGET]
    clusters = cluster_forget_questions(
        forget, config.thresholds, masker, config.workers, logger.get_logger_for("cluster")
    )
    tbl = create_table(
        [("Cluster", "r"), ("Size", "r"), ("Min. similarity", "r"), ("Template", "l")]
    )
    for c in clusters:
        tbl.add_row(
            [
                c.cluster_id,
                len(c.member_ids),
                "{0:.3f}".format(c.min_intra_similarity),
                c.template.masked,
            ]
        )
    print(tbl)
    if args.output:
        write_file_atomic(
            path(args, args.output),
            pretty_json(
                [
                    {
                        "cluster_id": c.cluster_id,
                        "member_ids": list(c.member_ids),
                        "template": c.template.masked,
                        "min_intra_similarity": c.min_intra_similarity,
                    }
                    for c in clusters
                ]
            ),
        )


def op_build_synset(args: Namespace) -> None:
    config = run_config(args)
    logger = get_logger()
    masker = open_masker(args, config, logger)
    qa_gen = open_qa_generator(args, config, logger)
    generator = None
    if args.probe:
        generator = config.open_port(
            PortKind.TEXT_GENERATOR, logger.get_logger_for("generator")
        )
    pairs = read_pairs(path(args, args.forget))
    forget = [p for p in pairs if p.set_kind == SetKind.FORGET]
    others = [p for p in pairs if p.set_kind != SetKind.FORGET]
    excluded = read_lines(path(args, args.exclude)) if args.exclude else []
    result = build_syn_similar_set(
        forget,
        read_lines(path(args, args.candidates)),
        excluded,
        masker,
        qa_gen,
        config.thresholds,
        generator=generator,
        other_sets=others,
        per_cluster=args.per_cluster,
        nr_workers=config.workers,
        logger=logger.get_logger_for("synset"),
    )
    out = path(args, args.output) if args.output else os.path.join(
        output_dir(args, config), "syn_similar.jsonl"
    )
    write_pairs(out, result.kept)
    logger.log(
        "wrote {0} pairs from {1} clusters to ‘{2}’ ({3} dropped by the probe)".format(
            len(result.kept), len(result.clusters), out, len(result.dropped)
        )
    )


def op_validate_sets(args: Namespace) -> None:
    config = run_config(args)
    logger = get_logger()
    masker = open_masker(args, config, logger)
    sets = group_by_kind(read_pairs(path(args, args.dataset)))
    forget = sets.get(SetKind.FORGET, [])

    tbl = create_table([("Set", "l"), ("QA pairs", "r"), ("Entities", "r")])
    for (kind, stats) in sorted(set_statistics(sets).items(), key=lambda kv: kv[0].value):
        tbl.add_row([kind.value, stats.pairs, stats.entities])
    print(tbl)

    result = validate_distinctness(sets, forget, config.thresholds, masker)
    if result.ok:
        logger.log("{0} comparisons, all sets distinct".format(result.checked))
        return
    tbl = create_table([("Set", "l"), ("Record", "l"), ("Against", "l"), ("Similarity", "r")])
    for v in result.violations:
        tbl.add_row([v.set_kind.value, v.neighbor_id, v.forget_id, "{0:.3f}".format(v.score)])
    for o in result.overlaps:
        tbl.add_row([o.set_kind.value, o.entity, "syn_similar_neighbor", "shared entity"])
    print(tbl)
    raise LabError(
        "{0} similarity violation(s) and {1} shared entities".format(
            len(result.violations), len(result.overlaps)
        )
    )


def _scored(
    args: Namespace,
    config: RunConfig,
    logger: Logger,
    dataset: Sequence[QAPair],
    after: Sequence[EvalRecord],
    before: Optional[Sequence[EvalRecord]],
) -> Any:
    embedder = config.open_port(PortKind.EMBEDDER, logger.get_logger_for("embedder"))
    nli = config.open_port(PortKind.NLI_JUDGE, logger.get_logger_for("nli"))
    return score_records(
        dataset,
        after,
        before,
        embedder=embedder,  # type: ignore
        nli=nli,  # type: ignore
        probability_mode=config.probability_mode,
        nr_workers=config.workers,
    )


def op_evaluate(args: Namespace) -> None:
    config = run_config(args)
    logger = get_logger()
    dataset = read_pairs(path(args, args.dataset))
    after = read_log(path(args, args.after))
    before = read_log(path(args, args.before)) if args.before else None

    baseline = None
    if before is not None:
        baseline = build_report(_scored(args, config, logger, dataset, before, before))
    result = build_report(_scored(args, config, logger, dataset, after, before), baseline)

    tbl = create_table([("Set", "l"), ("Records", "r"), ("MU", "r"), ("RUD (%)", "r")])
    for (kind, summary) in sorted(result.per_set.items()):
        rud = result.rud.get(kind)
        tbl.add_row(
            [
                kind,
                summary.count,
                "{0:.3f}".format(summary.mu),
                "" if rud is None else "{0:.2f}".format(rud),
            ]
        )
    print(tbl)
    if result.forget_efficacy is not None:
        print("forget efficacy: {0:.3f}".format(result.forget_efficacy))
    for p in reports.write_report(output_dir(args, config), result):
        logger.log("wrote ‘{0}’".format(p))


def op_rud(args: Namespace) -> None:
    print("{0:.2f}".format(relative_utility_drop(args.before, args.after)))


def _toy_lab(config: RunConfig, logger: Logger) -> Any:
    from unlearnlab.toylab import ToyLab

    return ToyLab.prepare(config.toy, config.seed, config.thresholds, logger)


def op_toy_run(args: Namespace) -> None:
    config = run_config(args)
    logger = get_logger()
    lab = _toy_lab(config, logger)
    train = SetKind(args.train) if args.train else None
    run = lab.run(
        config.loss,
        lr=args.lr,
        train=train,
        max_steps=args.max_steps,
        allow_partial=args.allow_partial,
    )
    summary = run.summary
    tbl = create_table([("Set", "l"), ("Before", "r"), ("After", "r"), ("RUD (%)", "r")])
    for (name, values) in sorted(summary["utility"].items()):
        tbl.add_row(
            [
                name,
                "{0:.3f}".format(values["before"]),
                "{0:.3f}".format(values["after"]),
                "{0:.2f}".format(summary["rud"]["set_kind"].get(name, 0.0)),
            ]
        )
    print(tbl)
    print(
        "{0}: forget efficacy {1:.3f} → {2:.3f} in {3} steps".format(
            run.spec.label,
            summary["forget_efficacy"]["before"],
            summary["forget_efficacy"]["after"],
            summary["steps"],
        )
    )
    for p in reports.write_toy_run(output_dir(args, config), run):
        logger.log("wrote ‘{0}’".format(p))


def op_sweep(args: Namespace) -> None:
    from unlearnlab.toylab.sweep import SWEEP_SETS, regularization_sweep

    config = run_config(args)
    logger = get_logger()
    lab = _toy_lab(config, logger)
    result = regularization_sweep(
        lab,
        methods=[Method(m) for m in args.methods],
        regularizers=[Regularizer(r) for r in args.regularizers],
        max_steps=args.max_steps,
        nr_workers=config.workers,
    )
    for reg in result.regularizers():
        grid = result.grid(reg)
        tbl = create_table(
            [("{0}: test \\ train".format(reg.value), "l")]
            + [(s.value, "r") for s in SWEEP_SETS]
        )
        for test in SWEEP_SETS:
            tbl.add_row(
                [test.value]
                + ["{0:.2f}".format(grid[test.value][t.value]) for t in SWEEP_SETS]
            )
        print(tbl)
    for p in reports.write_sweep(output_dir(args, config), result):
        logger.log("wrote ‘{0}’".format(p))


def op_report(args: Namespace) -> None:
    config = run_config(args)
    logger = get_logger()
    written = reports.render_charts(
        output_dir(args, config),
        trace_path=path(args, args.trace) if args.trace else None,
        sweep_path=path(args, args.sweep) if args.sweep else None,
    )
    for p in written:
        logger.log("wrote ‘{0}’".format(p))


def setup_logging(args: Namespace) -> None:
    if not getattr(args, "log_file", None):
        return
    logger = logging.getLogger("unlearnlab")
    logger.setLevel(logging.INFO)

    handler = logging.FileHandler(path(args, args.log_file), encoding="utf-8")
    formatter = logging.Formatter("unlearn-lab[{0}]: %(message)s".format(os.getpid()))
    handler.setFormatter(formatter)
    logger.addHandler(handler)

    logger.info("Command: {0}".format(" ".join(sys.argv)))

    # pass all stdout/stderr to the logger as well
    unlearnlab.util.TeeStderr()
    unlearnlab.util.TeeStdout()


def add_subparser(
    subparsers: _SubParsersAction, name: str, help: str
) -> ArgumentParser:
    subparser = subparsers.add_parser(name, help=help)
    subparser.add_argument(
        "--config",
        "-c",
        dest="config",
        metavar="FILE",
        default=None,
        help="path to the JSON run configuration",
    )
    subparser.add_argument(
        "--workdir",
        "-C",
        dest="workdir",
        metavar="DIR",
        default=None,
        help="directory all relative paths are resolved against",
    )
    subparser.add_argument("--debug", action="store_true", help="enable debug output")
    subparser.add_argument(
        "--log-file", dest="log_file", metavar="FILE", help="also log the session to FILE"
    )
    subparser.add_argument(
        "--seed", type=int, metavar="N", help="random seed (overrides the config)"
    )
    subparser.add_argument(
        "--workers",
        "-j",
        type=int,
        metavar="N",
        help="number of concurrent workers, -1 for one per task",
    )
    subparser.add_argument(
        "--record-fixtures",
        dest="record_fixtures",
        action="store_true",
        help="record missing port responses into the fixture directory",
    )
    return subparser


def add_common_threshold_options(subparser: ArgumentParser) -> None:
    subparser.add_argument(
        "--theta-high",
        dest="theta_high",
        type=float,
        metavar="X",
        help="similarity a syntactic neighbor must reach",
    )
    subparser.add_argument(
        "--theta-low",
        dest="theta_low",
        type=float,
        metavar="X",
        help="similarity other neighbors must stay at or below",
    )
    subparser.add_argument(
        "--min-cluster-size",
        dest="min_cluster_size",
        type=int,
        metavar="N",
        help="smallest cluster of forget questions to keep",
    )
    subparser.add_argument(
        "--entities",
        metavar="FILE",
        help="entity names the rule-based masker always masks",
    )


def _regularizer_name(s: str) -> str:
    return "none" if s.lower() == "none" else s.upper()


def add_common_loss_options(subparser: ArgumentParser) -> None:
    subparser.add_argument(
        "--method",
        type=str.upper,
        choices=[m.value for m in Method],
        help="unlearning objective",
    )
    subparser.add_argument(
        "--reg",
        type=_regularizer_name,
        choices=[r.value for r in Regularizer],
        help="retain-set regulariser",
    )
    subparser.add_argument(
        "--beta", type=float, metavar="X", help="NPO/DPO inverse temperature"
    )


def add_output_option(subparser: ArgumentParser, help: str) -> None:
    subparser.add_argument("--output", "-o", metavar="PATH", help=help)


def error(msg: str) -> None:
    sys.stderr.write(ansi_warn("error: ") + msg + "\n")


def parser_plugin_hooks(parser: ArgumentParser, subparsers: _SubParsersAction) -> None:
    pm.hook.parser(parser=parser, subparsers=subparsers)


__all__ = [
    "MultipleExceptions",
    "ConfigError",
    "LabError",
    "PROBABILITY_MODES",
    "SetKind",
    "Method",
    "Regularizer",
    "add_subparser",
    "add_common_threshold_options",
    "add_common_loss_options",
    "add_output_option",
    "error",
    "setup_logging",
    "parser_plugin_hooks",
    "op_list_plugins",
    "op_mask",
    "op_sim",
    "op_cluster",
    "op_build_synset",
    "op_validate_sets",
    "op_evaluate",
    "op_rud",
    "op_toy_run",
    "op_sweep",
    "op_report",
]
