# -*- coding: utf-8 -*-
import io
import json
import os
import shutil
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest import mock

from unlearnlab.__main__ import main


def jsonl(records):
    return "".join(json.dumps(r) + "\n" for r in records)


def log(id, model_tag, generation, prob, embedding):
    return {
        "id": id,
        "model_tag": model_tag,
        "generation": generation,
        "token_probs": [prob],
        "embedding": embedding,
    }


def pair(id, question, answer, set_kind="forget"):
    return {
        "id": id,
        "entity": "",
        "question": question,
        "answer": answer,
        "set_kind": set_kind,
    }


class CliTest(unittest.TestCase):
    def setUp(self):
        self.dir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.dir)

    def write(self, name, text):
        with open(os.path.join(self.dir, name), "w", encoding="utf-8") as f:
            f.write(text)
        return name

    def run_cli(self, *argv):
        (out, err) = (io.StringIO(), io.StringIO())
        code = 0
        with mock.patch("sys.argv", ["unlearn-lab"] + list(argv)):
            with redirect_stdout(out), redirect_stderr(err):
                try:
                    main()
                except SystemExit as e:
                    code = e.code
        return (code, out.getvalue(), err.getvalue())

    def test_sim(self):
        (code, out, _) = self.run_cli("sim", "--a", "When was {X} born?", "--b", "When was {X} born?")
        self.assertEqual((code, out), (0, "1.0\n"))
        (_, out, _) = self.run_cli("sim", "--a", "abc", "--b", "abd")
        self.assertEqual(out, "0.6667\n")
        (_, out, _) = self.run_cli(
            "sim", "--raw", "--a", "When was Barack Obama born?", "--b", "When was Marie Curie born?"
        )
        self.assertEqual(out, "1.0\n")

    def test_rud(self):
        (code, out, _) = self.run_cli("rud", "--before", "0.770", "--after", "0.375")
        self.assertEqual((code, out), (0, "-51.30\n"))
        (code, _, err) = self.run_cli("rud", "--before", "0", "--after", "0.5")
        self.assertEqual(code, 1)
        self.assertIn("error: ", err)

    def test_mask(self):
        (code, out, _) = self.run_cli("mask", "-q", "When was Barack Obama born?")
        self.assertEqual((code, out), (0, "When was {X} born?\n"))

    def test_bad_config(self):
        self.write("config.json", '{"bogus": 1, "seed": -3}')
        (code, _, err) = self.run_cli(
            "mask", "-C", self.dir, "-c", "config.json", "-q", "When was Barack Obama born?"
        )
        self.assertEqual(code, 2)
        self.assertIn("unknown key ‘bogus’", err)

    def test_cluster(self):
        self.write(
            "forget.jsonl",
            jsonl(
                [
                    pair("f1", "When was Barack Obama born?", "1961"),
                    pair("f2", "When was Marie Curie born?", "1867"),
                    pair("f3", "When was Albert Einstein born?", "1879"),
                ]
            ),
        )
        (code, out, _) = self.run_cli(
            "cluster", "-C", self.dir, "--forget", "forget.jsonl", "-o", "clusters.json"
        )
        self.assertEqual(code, 0)
        self.assertIn("When was {X} born?", out)
        with open(os.path.join(self.dir, "clusters.json"), encoding="utf-8") as f:
            clusters = json.load(f)
        self.assertEqual(len(clusters), 1)
        self.assertEqual(sorted(clusters[0]["member_ids"]), ["f1", "f2", "f3"])

    def test_validate_sets_reports_violations(self):
        self.write(
            "sets.jsonl",
            jsonl(
                [
                    pair("f1", "When was Barack Obama born?", "1961"),
                    pair("d1", "When was Marie Curie born?", "1867", "domain_neighbor"),
                ]
            ),
        )
        (code, out, err) = self.run_cli("validate-sets", "-C", self.dir, "--dataset", "sets.jsonl")
        self.assertEqual(code, 1)
        self.assertIn("d1", out)
        self.assertIn("similarity violation", err)

    def test_evaluate(self):
        self.write(
            "data.jsonl",
            jsonl(
                [
                    pair("f1", "When was Barack Obama born?", "1961"),
                    pair("d1", "Where did Marie Curie grow up?", "Warsaw", "domain_neighbor"),
                ]
            ),
        )
        self.write(
            "before.jsonl",
            jsonl(
                [
                    log("f1", "base", "born in 1961", 0.9, [1.0, 0.0]),
                    log("d1", "base", "She grew up in Warsaw.", 0.9, [1.0, 0.0]),
                ]
            ),
        )
        self.write(
            "after.jsonl",
            jsonl(
                [
                    log("f1", "ga", "I don't know.", 0.1, [0.0, 1.0]),
                    log("d1", "ga", "She grew up in Warsaw.", 0.9, [1.0, 0.0]),
                ]
            ),
        )
        (code, out, _) = self.run_cli(
            "evaluate",
            "-C",
            self.dir,
            "--dataset",
            "data.jsonl",
            "--after",
            "after.jsonl",
            "--before",
            "before.jsonl",
            "-o",
            "out",
        )
        self.assertEqual(code, 0)
        self.assertIn("forget efficacy: 0.975", out)
        with open(os.path.join(self.dir, "out", "report.json"), encoding="utf-8") as f:
            report = json.load(f)
        self.assertAlmostEqual(report["model_utility"], 0.975)
        self.assertEqual(report["rud"], {"domain_neighbor": 0.0})
        self.assertTrue(os.path.exists(os.path.join(self.dir, "out", "report.csv")))

    def test_report(self):
        self.write(
            "trace.jsonl",
            jsonl([{"step": 0, "grad_norms": {"syn_similar": 1.0}}, {"step": 1, "grad_norms": {"syn_similar": 0.5}}]),
        )
        (code, _, _) = self.run_cli("report", "-C", self.dir, "--trace", "trace.jsonl", "-o", "charts")
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(os.path.join(self.dir, "charts", "gradient_norms.svg")))
        (code, _, err) = self.run_cli("report", "-C", self.dir, "-o", "charts")
        self.assertEqual(code, 1)
        self.assertIn("nothing to render", err)

    def test_list_plugins(self):
        (code, out, _) = self.run_cli("list-plugins")
        self.assertEqual(code, 0)
        self.assertIn("builtin:answer-table", out)
        self.assertIn("builtin:llm-masker", out)

    def read(self, *parts):
        with open(os.path.join(self.dir, *parts), "rb") as f:
            return f.read()

    def test_toy_run_is_reproducible(self):
        outputs = []
        for name in ("first", "second"):
            (code, out, _) = self.run_cli(
                "toy-run", "-C", self.dir, "--method", "GA", "--reg", "none", "-o", name
            )
            self.assertEqual(code, 0)
            self.assertIn("GA: forget efficacy", out)
            outputs.append(out)
        self.assertEqual(outputs[0], outputs[1])
        for name in ("trace.jsonl", "summary.json"):
            self.assertEqual(self.read("first", name), self.read("second", name))
        summary = json.loads(self.read("first", "summary.json").decode("utf-8"))
        self.assertTrue(summary["reached"])

        (code, _, _) = self.run_cli(
            "report", "-C", self.dir, "--trace", "first/trace.jsonl", "-o", "charts"
        )
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(os.path.join(self.dir, "charts", "gradient_norms.svg")))

    def test_report_missing_trace(self):
        (code, _, err) = self.run_cli(
            "report", "-C", self.dir, "--trace", "absent.jsonl", "-o", "charts"
        )
        self.assertEqual(code, 1)
        self.assertIn("cannot read trace", err)

    def test_sweep(self):
        (code, out, _) = self.run_cli(
            "sweep", "-C", self.dir, "--methods", "GA", "--regularizers", "GD", "-o", "grid"
        )
        self.assertEqual(code, 0)
        self.assertIn("GD: test \\ train", out)
        with open(os.path.join(self.dir, "grid", "sweep.json"), encoding="utf-8") as f:
            result = json.load(f)
        self.assertEqual(len(result["cells"]), 3)
        self.assertEqual(sorted(result["grids"]), ["GD"])
        self.assertTrue(os.path.exists(os.path.join(self.dir, "grid", "sweep-gd.csv")))

    def test_build_synset(self):
        forget = [
            ("f1", "Barack Obama", "When was Barack Obama born?", "1961"),
            ("f2", "Angela Merkel", "When was Angela Merkel born?", "1954"),
            ("f3", "Elon Musk", "When was Elon Musk born?", "1971"),
        ]
        self.write(
            "forget.jsonl",
            jsonl(
                [
                    dict(pair(id, question, answer), entity=entity)
                    for (id, entity, question, answer) in forget
                ]
            ),
        )
        self.write("candidates.txt", "Barack Obama\nTaylor Swift\nLionel Messi\n")
        self.write(
            "answers.json",
            json.dumps(
                [
                    {"template": "When was {X} born?", "entity": "Taylor Swift", "answer": "1989"},
                    {"template": "When was {X} born?", "entity": "Lionel Messi", "answer": "1987"},
                ]
            ),
        )
        (code, _, err) = self.run_cli(
            "build-synset",
            "-C",
            self.dir,
            "--forget",
            "forget.jsonl",
            "--candidates",
            "candidates.txt",
            "--answers",
            "answers.json",
            "-o",
            "syn.jsonl",
        )
        self.assertEqual(code, 0, err)
        records = [
            json.loads(line)
            for line in self.read("syn.jsonl").decode("utf-8").splitlines()
        ]
        self.assertEqual(
            [(r["entity"], r["answer"]) for r in records],
            [("Taylor Swift", "1989"), ("Lionel Messi", "1987")],
        )
        self.assertEqual({r["set_kind"] for r in records}, {"syn_similar_neighbor"})
        self.assertIn("wrote 2 pairs from 1 clusters", err)
