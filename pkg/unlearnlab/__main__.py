#! /usr/bin/env python3
# -*- coding: utf-8 -*-

import sys
from argparse import ArgumentParser, _SubParsersAction

from unlearnlab.script_defs import *

# Set up the parser.
parser = ArgumentParser(
    description="Neighbor sets and utility metrics for entity unlearning",
    prog="unlearn-lab",
)

subparsers: _SubParsersAction = parser.add_subparsers(
    help="sub-command help", metavar="operation", required=True
)

subparser = add_subparser(subparsers, "mask", help="mask the entities of questions")
subparser.set_defaults(op=op_mask)
group = subparser.add_mutually_exclusive_group(required=True)
group.add_argument("--question", "-q", metavar="TEXT", help="a single question")
group.add_argument("--input", "-i", metavar="FILE", help="JSONL dataset of QA pairs")
subparser.add_argument(
    "--entities", metavar="FILE", help="entity names the rule-based masker always masks"
)

subparser = add_subparser(
    subparsers, "sim", help="similarity of two masked questions"
)
subparser.set_defaults(op=op_sim)
subparser.add_argument("--a", required=True, metavar="TEXT", help="first question")
subparser.add_argument("--b", required=True, metavar="TEXT", help="second question")
subparser.add_argument(
    "--raw",
    action="store_true",
    help="mask both questions first instead of taking them as masked forms",
)
subparser.add_argument(
    "--entities", metavar="FILE", help="entity names the rule-based masker always masks"
)

subparser = add_subparser(
    subparsers, "cluster", help="group forget questions by masked structure"
)
subparser.set_defaults(op=op_cluster)
subparser.add_argument(
    "--forget", required=True, metavar="FILE", help="JSONL dataset with the forget set"
)
add_common_threshold_options(subparser)
add_output_option(subparser, "also write the clusters as JSON to PATH")

subparser = add_subparser(
    subparsers,
    "build-synset",
    help="build the syntactically similar neighbor set",
)
subparser.set_defaults(op=op_build_synset)
subparser.add_argument(
    "--forget",
    required=True,
    metavar="FILE",
    help="JSONL dataset with the forget set (other records count as neighbor sets)",
)
subparser.add_argument(
    "--candidates",
    required=True,
    metavar="FILE",
    help="retain entities to fill templates with, one per line",
)
subparser.add_argument(
    "--exclude", metavar="FILE", help="entities never to use, one per line"
)
subparser.add_argument(
    "--answers",
    metavar="FILE",
    help="JSON list of {template, entity, answer, aliases} for the answer-table generator",
)
subparser.add_argument(
    "--per-cluster",
    dest="per_cluster",
    type=int,
    metavar="N",
    help="questions per cluster (default: the cluster size)",
)
subparser.add_argument(
    "--probe",
    action="store_true",
    help="keep only questions the configured text generator answers",
)
add_common_threshold_options(subparser)
add_output_option(subparser, "JSONL file for the new neighbor set")

subparser = add_subparser(
    subparsers,
    "validate-sets",
    help="print set statistics and check the neighbor sets are distinct",
)
subparser.set_defaults(op=op_validate_sets)
subparser.add_argument(
    "--dataset", required=True, metavar="FILE", help="JSONL dataset with every set"
)
add_common_threshold_options(subparser)

subparser = add_subparser(
    subparsers, "evaluate", help="score evaluation logs and report model utility"
)
subparser.set_defaults(op=op_evaluate)
subparser.add_argument("--dataset", required=True, metavar="FILE", help="JSONL dataset")
subparser.add_argument(
    "--after", required=True, metavar="FILE", help="evaluation log after unlearning"
)
subparser.add_argument(
    "--before", metavar="FILE", help="evaluation log before unlearning"
)
subparser.add_argument(
    "--probability-mode",
    dest="probability_mode",
    choices=PROBABILITY_MODES,
    help="how token probabilities combine into an answer probability",
)
add_output_option(subparser, "directory for report.json and report.csv")

subparser = add_subparser(
    subparsers, "rud", help="relative utility drop between two utility values"
)
subparser.set_defaults(op=op_rud)
subparser.add_argument("--before", required=True, type=float, metavar="MU")
subparser.add_argument("--after", required=True, type=float, metavar="MU")

subparser = add_subparser(
    subparsers, "toy-run", help="unlearn the toy model with one objective"
)
subparser.set_defaults(op=op_toy_run)
add_common_loss_options(subparser)
subparser.add_argument("--lr", type=float, metavar="X", help="step size")
subparser.add_argument(
    "--train",
    choices=[k.value for k in SetKind if k != SetKind.FORGET],
    help="regularise with the train half of this set only",
)
subparser.add_argument(
    "--max-steps", dest="max_steps", type=int, metavar="N", help="step limit"
)
subparser.add_argument(
    "--allow-partial",
    dest="allow_partial",
    action="store_true",
    help="report the last state when the forget efficacy band is not reached",
)
add_output_option(subparser, "directory for trace.jsonl and summary.json")

subparser = add_subparser(
    subparsers, "sweep", help="train/test grid of regularisation sets on the toy model"
)
subparser.set_defaults(op=op_sweep)
subparser.add_argument(
    "--methods",
    nargs="+",
    type=str.upper,
    choices=[m.value for m in Method],
    default=[m.value for m in (Method.GA, Method.NPO, Method.IDK, Method.DPO)],
    help="objectives to average over",
)
subparser.add_argument(
    "--regularizers",
    nargs="+",
    type=str.upper,
    choices=[Regularizer.GD.value, Regularizer.KL.value],
    default=[Regularizer.GD.value, Regularizer.KL.value],
    help="regularisers to sweep",
)
subparser.add_argument(
    "--max-steps", dest="max_steps", type=int, metavar="N", help="step limit per cell"
)
add_output_option(subparser, "directory for the grids and sweep.json")

subparser = add_subparser(subparsers, "report", help="render SVG charts")
subparser.set_defaults(op=op_report)
subparser.add_argument("--trace", metavar="FILE", help="trace.jsonl of a toy run")
subparser.add_argument("--sweep", metavar="FILE", help="sweep.json of a sweep")
add_output_option(subparser, "directory for the SVG files")

subparser = subparsers.add_parser(
    "list-plugins", help="list the available unlearn-lab plugins"
)
subparser.set_defaults(op=op_list_plugins)
subparser.add_argument(
    "--verbose", "-v", action="store_true", help="Provide extra plugin information"
)
subparser.add_argument("--debug", action="store_true", help="enable debug output")

parser_plugin_hooks(parser, subparsers)


def main() -> None:

    args = parser.parse_args()
    setup_logging(args)

    try:
        args.op(args)
    except ConfigError as e:
        for problem in e.problems:
            error(problem)
        sys.exit(2)
    except LabError as e:
        error(str(e))
        if args.debug:
            raise
        sys.exit(1)
    except KeyboardInterrupt:
        error("interrupted")
        sys.exit(1)
    except MultipleExceptions as e:
        error(str(e))
        if args.debug or str(e) == "":
            e.print_all_backtraces()
        sys.exit(1)


if __name__ == "__main__":
    main()
