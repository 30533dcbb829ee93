# -*- coding: utf-8 -*-
import os
import shutil
import tempfile
import unittest

from unlearnlab.dataset import (
    Category,
    DatasetError,
    EvalRecord,
    QAPair,
    SetKind,
    dumps_pairs,
    read_json,
    read_lines,
    read_log,
    read_pairs,
    write_log,
    write_pairs,
)


class DatasetTest(unittest.TestCase):
    def setUp(self):
        self.dir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.dir)

    def path(self, name, text=None):
        p = os.path.join(self.dir, name)
        if text is not None:
            with open(p, "w", encoding="utf-8") as f:
                f.write(text)
        return p

    def test_pairs_on_disk(self):
        pairs = [
            QAPair("f1", "Barack Obama", "When was Barack Obama born?", "1961", ("August 4, 1961",)),
            QAPair(
                "s1",
                "Taylor Swift",
                "When was Taylor Swift born?",
                "1989",
                set_kind=SetKind.SYN_SIMILAR_NEIGHBOR,
                cluster_id=0,
                category=Category.HUMAN,
            ),
        ]
        write_pairs(self.path("d.jsonl"), pairs)
        self.assertEqual(read_pairs(self.path("d.jsonl")), pairs)
        first = dumps_pairs(pairs).splitlines()[0]
        self.assertTrue(first.startswith('{"aliases":["August 4, 1961"],"answer":"1961"'))

    def test_record_validation(self):
        self.assertRaises(DatasetError, QAPair, "x", "e", "  ", "a")
        self.assertRaises(
            DatasetError, QAPair, "x", "e", "q?", "a", set_kind=SetKind.SYN_SIMILAR_NEIGHBOR
        )
        self.assertRaises(DatasetError, QAPair.from_dict, {"id": "x", "entity": "e"})
        self.assertRaises(
            DatasetError,
            QAPair.from_dict,
            {"id": "x", "entity": "e", "question": "q?", "answer": "a", "set_kind": "retain"},
        )
        self.assertRaises(
            DatasetError,
            QAPair.from_dict,
            {"id": "x", "entity": "e", "question": "q?", "answer": "a", "colour": "red"},
        )

    def test_defaults(self):
        p = QAPair.from_dict({"id": "x", "entity": "e", "question": "q?", "answer": "a"})
        self.assertEqual(p.set_kind, SetKind.FORGET)
        self.assertEqual(p.aliases, ())

    def test_duplicates(self):
        line = '{"id": "x", "entity": "e", "question": "q?", "answer": "a"}\n'
        self.assertRaises(DatasetError, read_pairs, self.path("dup.jsonl", line + "\n" + line))

    def test_bad_files(self):
        self.assertRaises(DatasetError, read_pairs, self.path("missing.jsonl"))
        self.assertRaises(DatasetError, read_pairs, self.path("bad.jsonl", "{\n"))
        self.assertRaises(DatasetError, read_json, self.path("bad.json", "{"))
        self.assertRaises(DatasetError, read_lines, self.path("missing.txt"))

    def test_logs(self):
        records = [
            EvalRecord("f1", "after", "I don't know.", (0.1, 0.2)),
            EvalRecord("f2", "after", "1961", (0.9,), embedding=(0.0, 1.0), nli_label="entailment"),
        ]
        write_log(self.path("log.jsonl"), records)
        self.assertEqual(read_log(self.path("log.jsonl")), records)
        self.assertNotIn("embedding", records[0].to_dict())
        self.assertRaises(
            DatasetError, read_log, self.path("short.jsonl", '{"id": "f1", "model_tag": "x"}\n')
        )

    def test_log_values_are_checked(self):
        good = {"id": "f1", "model_tag": "after", "generation": "1961", "token_probs": [0.5]}
        self.assertEqual(EvalRecord.from_dict(good).token_probs, (0.5,))
        bad_probability = dict(good, token_probs=["high"])
        self.assertRaises(DatasetError, EvalRecord.from_dict, bad_probability)
        bad_embedding = dict(good, embedding=5)
        self.assertRaises(DatasetError, EvalRecord.from_dict, bad_embedding)
        self.assertRaises(DatasetError, EvalRecord.from_dict, dict(good, nli_label="maybe"))
        self.assertEqual(
            EvalRecord.from_dict(dict(good, nli_label="contradiction")).nli_label,
            "contradiction",
        )

    def test_read_lines(self):
        self.assertEqual(
            read_lines(self.path("e.txt", "Barack Obama\n\n  Marie Curie \n")),
            ["Barack Obama", "Marie Curie"],
        )
