# -*- coding: utf-8 -*-
import unittest
from io import StringIO

import numpy as np

from unlearnlab.clients import QAGenerator, TextGenerator
from unlearnlab.clients.offline import AnswerEntry, RuleBasedMasker, TemplateQAGenerator
from unlearnlab.dataset import Category, QAPair, SetKind
from unlearnlab.logger import Logger
from unlearnlab.neighborset import (
    EmptyForgetSet,
    GenerationFailed,
    InvalidThresholds,
    NoValidFill,
    Thresholds,
    _prune_to_clique,
    alias_match,
    build_syn_similar_set,
    cluster_forget_questions,
    generate_syn_similar_pairs,
    group_by_kind,
    probe_filter,
    select_candidate_entities,
    set_statistics,
    validate_distinctness,
)
from unlearnlab.textsim import levenshtein_similarity, mask_entities

BORN = "When was {X} born?"


def forget_pairs():
    return [
        QAPair("f1", "Barack Obama", "When was Barack Obama born?", "1961"),
        QAPair("f2", "Angela Merkel", "When was Angela Merkel born?", "1954"),
        QAPair("f3", "Elon Musk", "When was Elon Musk born?", "1971"),
        QAPair("f4", "Marie Curie", "Where did Marie Curie study?", "Paris"),
    ]


class AnswerBook(TextGenerator):
    """Generator that answers from a fixed question table."""

    def __init__(self, answers):
        TextGenerator.__init__(self)
        self.answers = answers

    def generate(self, prompt, max_tokens=64):
        return self.answers.get(prompt, "I am not sure.")


def answer_table(entries):
    return TemplateQAGenerator(
        {(BORN, entity): AnswerEntry(answer) for (entity, answer) in entries}
    )


class ThresholdsTest(unittest.TestCase):
    def test_defaults(self):
        th = Thresholds()
        self.assertEqual((th.theta_high, th.theta_low, th.min_cluster_size), (0.75, 0.4, 3))

    def test_invalid(self):
        self.assertRaises(InvalidThresholds, Thresholds, theta_high=0.3, theta_low=0.4)
        self.assertRaises(InvalidThresholds, Thresholds, theta_high=1.2)
        self.assertRaises(InvalidThresholds, Thresholds, min_cluster_size=1)


class ClusterTest(unittest.TestCase):
    def setUp(self):
        self.masker = RuleBasedMasker()

    def test_cluster_of_entity_swaps(self):
        clusters = cluster_forget_questions(forget_pairs(), Thresholds(), self.masker)
        self.assertEqual(len(clusters), 1)
        c = clusters[0]
        self.assertEqual(c.cluster_id, 0)
        self.assertEqual(c.member_ids, ("f1", "f2", "f3"))
        self.assertEqual(c.template.masked, BORN)
        self.assertEqual(c.min_intra_similarity, 1.0)

    def test_clusters_are_cliques(self):
        pairs = forget_pairs()
        th = Thresholds(theta_high=0.75, min_cluster_size=2)
        masked = {p.id: mask_entities(p.question, self.masker) for p in pairs}
        for c in cluster_forget_questions(pairs, th, self.masker, nr_workers=2):
            self.assertGreaterEqual(len(c.member_ids), th.min_cluster_size)
            for a in c.member_ids:
                for b in c.member_ids:
                    score = levenshtein_similarity(masked[a], masked[b]).value
                    self.assertGreaterEqual(score, th.theta_high)

    def test_small_groups_dropped(self):
        th = Thresholds(min_cluster_size=4)
        self.assertEqual(cluster_forget_questions(forget_pairs(), th, self.masker), [])

    def test_empty_forget_set(self):
        self.assertRaises(
            EmptyForgetSet, cluster_forget_questions, [], Thresholds(), self.masker
        )

    def test_prune_chain(self):
        sim = np.array([[1.0, 0.8, 0.5], [0.8, 1.0, 0.8], [0.5, 0.8, 1.0]])
        self.assertEqual(_prune_to_clique([0, 1, 2], sim, ["a", "b", "c"], 0.75), [1, 2])


class GenerationTest(unittest.TestCase):
    def setUp(self):
        self.masker = RuleBasedMasker()
        self.clusters = cluster_forget_questions(forget_pairs(), Thresholds(), self.masker)

    def test_select_candidates(self):
        self.assertEqual(
            select_candidate_entities(["A", "B", "A", "C"], ["B"]), ["A", "C"]
        )

    def test_fill_templates(self):
        qa = answer_table([("Taylor Swift", "1989"), ("Lionel Messi", "1987")])
        pairs = generate_syn_similar_pairs(
            self.clusters,
            ["Nobody Known", "Taylor Swift", "Lionel Messi"],
            qa,
            self.masker,
            Thresholds(),
            categories={"Taylor Swift": Category.HUMAN},
        )
        self.assertEqual([p.id for p in pairs], ["syn-0-0", "syn-0-1"])
        self.assertEqual(pairs[0].question, "When was Taylor Swift born?")
        self.assertEqual(pairs[0].set_kind, SetKind.SYN_SIMILAR_NEIGHBOR)
        self.assertEqual(pairs[0].cluster_id, 0)
        self.assertEqual(pairs[0].category, Category.HUMAN)
        self.assertIsNone(pairs[1].category)

    def test_per_cluster_limit(self):
        qa = answer_table([("Taylor Swift", "1989"), ("Lionel Messi", "1987")])
        pairs = generate_syn_similar_pairs(
            self.clusters,
            ["Taylor Swift", "Lionel Messi"],
            qa,
            self.masker,
            Thresholds(),
            per_cluster=1,
        )
        self.assertEqual([p.entity for p in pairs], ["Taylor Swift"])

    def test_fill_resembling_other_sets_is_rejected(self):
        qa = answer_table([("Taylor Swift", "1989")])
        domain = QAPair(
            "d1",
            "Frida Kahlo",
            "When was Frida Kahlo born?",
            "1907",
            set_kind=SetKind.DOMAIN_NEIGHBOR,
        )
        self.assertRaises(
            NoValidFill,
            generate_syn_similar_pairs,
            self.clusters,
            ["Taylor Swift"],
            qa,
            self.masker,
            Thresholds(),
            other_sets=[domain],
        )

    def test_no_candidates(self):
        self.assertRaises(
            NoValidFill,
            generate_syn_similar_pairs,
            self.clusters,
            [],
            answer_table([]),
            self.masker,
            Thresholds(),
        )

    def test_generator_failure(self):
        self.assertRaises(
            GenerationFailed,
            generate_syn_similar_pairs,
            self.clusters,
            ["Taylor Swift"],
            QAGenerator(),
            self.masker,
            Thresholds(),
        )


class ProbeTest(unittest.TestCase):
    def test_alias_match(self):
        self.assertTrue(alias_match("He was born in 1961.", "1961", ()))
        self.assertTrue(alias_match("That is  NYC", "New York City", ["nyc"]))
        self.assertFalse(alias_match("No idea", "1961", ["sixty-one"]))

    def test_probe_filter(self):
        pairs = forget_pairs()[:2]
        gen = AnswerBook({"When was Barack Obama born?": "In 1961."})
        (kept, dropped) = probe_filter(pairs, gen)
        self.assertEqual([p.id for p in kept], ["f1"])
        self.assertEqual([p.id for p in dropped], ["f2"])

    def test_probe_filter_logs_a_tally(self):
        logfile = StringIO()
        stage = Logger(logfile).get_logger_for("probe")
        gen = AnswerBook({"When was Barack Obama born?": "In 1961."})
        probe_filter(forget_pairs()[:2], gen, logger=stage)
        self.assertEqual(logfile.getvalue(), "probe> probing .x kept 1 of 2 pairs\n")


class DistinctnessTest(unittest.TestCase):
    def setUp(self):
        self.masker = RuleBasedMasker()
        self.forget = forget_pairs()[:3]

    def test_violations_and_overlaps(self):
        sets = {
            SetKind.DOMAIN_NEIGHBOR: [
                QAPair(
                    "d1",
                    "Frida Kahlo",
                    "When was Frida Kahlo born?",
                    "1907",
                    set_kind=SetKind.DOMAIN_NEIGHBOR,
                )
            ],
            SetKind.ENTITY_NEIGHBOR: [
                QAPair(
                    "e1",
                    "Jane Austen",
                    "Which novels did Jane Austen publish before she moved to the city of Bath?",
                    "Pride and Prejudice",
                    set_kind=SetKind.ENTITY_NEIGHBOR,
                )
            ],
            SetKind.SYN_SIMILAR_NEIGHBOR: [
                QAPair(
                    "s1",
                    "Barack Obama",
                    "When was Barack Obama born?",
                    "1961",
                    set_kind=SetKind.SYN_SIMILAR_NEIGHBOR,
                    cluster_id=0,
                )
            ],
        }
        report = validate_distinctness(sets, self.forget, Thresholds(), self.masker)
        self.assertFalse(report.ok)
        self.assertEqual(report.checked, 6)
        self.assertEqual(
            sorted(set((v.set_kind, v.neighbor_id) for v in report.violations)),
            [(SetKind.DOMAIN_NEIGHBOR, "d1")],
        )
        self.assertEqual(
            [(o.set_kind, o.entity) for o in report.overlaps],
            [(SetKind.FORGET, "Barack Obama")],
        )

    def test_statistics(self):
        pairs = forget_pairs() + [
            QAPair("d1", "X", "Q?", "A", set_kind=SetKind.DOMAIN_NEIGHBOR),
            QAPair("d2", "X", "R?", "B", set_kind=SetKind.DOMAIN_NEIGHBOR),
        ]
        stats = set_statistics(group_by_kind(pairs))
        self.assertEqual(stats[SetKind.FORGET], (4, 4))
        self.assertEqual(stats[SetKind.DOMAIN_NEIGHBOR], (2, 1))


class PipelineTest(unittest.TestCase):
    def test_build_syn_similar_set(self):
        masker = RuleBasedMasker()
        qa = answer_table(
            [("Barack Obama", "1961"), ("Taylor Swift", "1989"), ("Lionel Messi", "1987")]
        )
        gen = AnswerBook({"When was Taylor Swift born?": "1989"})
        result = build_syn_similar_set(
            forget_pairs(),
            ["Barack Obama", "Taylor Swift", "Lionel Messi"],
            [],
            masker,
            qa,
            Thresholds(),
            generator=gen,
        )
        self.assertEqual(len(result.clusters), 1)
        self.assertEqual(result.candidates, ["Taylor Swift", "Lionel Messi"])
        self.assertEqual([p.entity for p in result.kept], ["Taylor Swift"])
        self.assertEqual([p.entity for p in result.dropped], ["Lionel Messi"])
