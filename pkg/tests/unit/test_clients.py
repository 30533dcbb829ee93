# -*- coding: utf-8 -*-
import json
import os
import shutil
import tempfile
import threading
import time
import unittest
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from unlearnlab.clients import (
    Capabilities,
    EntityMasker,
    FixtureMiss,
    LengthZero,
    MaskerUnavailable,
    NLILabel,
    Port,
    PortConfigError,
    PortDescriptor,
    PortError,
    PortKind,
    PortUnavailable,
    ProtocolError,
    TextGenerator,
    TokenScorer,
    Transport,
    fan_out,
)
from unlearnlab.clients.fixtures import (
    RECORD,
    FixtureStore,
    FixtureTransport,
    request_key,
)
from unlearnlab.clients.llm import LLMEntityMasker, LLMQAGenerator, parse_json_reply
from unlearnlab.clients.offline import (
    AnswerEntry,
    HashingEmbedder,
    LexicalNLIJudge,
    RuleBasedMasker,
    TemplateQAGenerator,
)
from unlearnlab.clients.registry import open_port
from unlearnlab.clients.remote import HttpTransport

GENERATE = {"prompt": "When was Barack Obama born?", "max_tokens": 64}


class Echo(Transport):
    def __init__(self):
        self.calls = []

    def call(self, op, payload):
        self.calls.append((op, payload))
        return {"text": payload["prompt"].upper()}


class Scripted(TextGenerator):
    """Replies with canned texts in order."""

    def __init__(self, replies):
        TextGenerator.__init__(self)
        self.replies = list(replies)
        self.prompts = []

    def generate(self, prompt, max_tokens=64):
        self.prompts.append(prompt)
        return self.replies.pop(0)


class FixtureTest(unittest.TestCase):
    def setUp(self):
        self.dir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.dir)

    def test_replay(self):
        FixtureStore(self.dir).put("text_generator", "generate", GENERATE, {"text": "1961"})
        transport = FixtureTransport(FixtureStore(self.dir), "text_generator")
        gen = TextGenerator(transport=transport)
        self.assertEqual(gen.generate("When was Barack Obama born?"), "1961")
        self.assertRaises(FixtureMiss, gen.generate, "When was Marie Curie born?")

    def test_record(self):
        live = Echo()
        store = FixtureStore(self.dir)
        gen = TextGenerator(transport=FixtureTransport(store, "text_generator", RECORD, live))
        self.assertEqual(gen.generate("b"), "B")
        self.assertEqual(gen.generate("a"), "A")
        self.assertEqual(gen.generate("b"), "B")
        self.assertEqual(len(live.calls), 2)

        with open(store.path_for("text_generator"), encoding="utf-8") as f:
            keys = [json.loads(line)["key"] for line in f]
        self.assertEqual(keys, sorted(keys))
        self.assertEqual(len(keys), 2)

        replay = TextGenerator(
            transport=FixtureTransport(FixtureStore(self.dir), "text_generator")
        )
        self.assertEqual(replay.generate("a"), "A")

    def test_request_key(self):
        self.assertEqual(
            request_key("embedder", "embed", {"a": 1, "b": 2}),
            request_key("embedder", "embed", {"b": 2, "a": 1}),
        )
        self.assertNotEqual(
            request_key("embedder", "embed", {"text": "x"}),
            request_key("nli_judge", "embed", {"text": "x"}),
        )

    def test_bad_modes(self):
        store = FixtureStore(self.dir)
        self.assertRaises(PortConfigError, FixtureTransport, store, "embedder", RECORD)
        self.assertRaises(PortConfigError, FixtureTransport, store, "embedder", "live")

    def test_malformed_file(self):
        with open(os.path.join(self.dir, "embedder.jsonl"), "w") as f:
            f.write("not json\n")
        transport = FixtureTransport(FixtureStore(self.dir), "embedder")
        self.assertRaises(ProtocolError, transport.call, "embed", {"text": "x"})

    def test_open_fixture_endpoint(self):
        FixtureStore(self.dir).put(
            "nli_judge",
            "nli",
            {"premise": "a", "hypothesis": "b"},
            {"label": "contradiction"},
        )
        judge = open_port(PortDescriptor(PortKind.NLI_JUDGE, "fixture:" + self.dir))
        self.assertEqual(judge.nli("a", "b"), NLILabel.CONTRADICTION)

    def test_fixtures_dir_intercepts_server(self):
        desc = PortDescriptor(PortKind.TEXT_GENERATOR, "http://127.0.0.1:9")
        gen = open_port(desc, fixtures_dir=self.dir)
        self.assertRaises(FixtureMiss, gen.generate, "anything")


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.hits[self.path] = self.server.hits.get(self.path, 0) + 1
        if self.path.startswith("/down/"):
            self.send_response(503)
            self.end_headers()
            return
        if self.path.endswith("/generate"):
            (status, reply) = (200, json.dumps({"text": body["prompt"][::-1]}))
        elif self.path.endswith("/score"):
            (status, reply) = (200, "oops")
        else:
            (status, reply) = (404, "{}")
        data = reply.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class HttpTransportTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        cls.server.hits = {}
        cls.thread = threading.Thread(target=cls.server.serve_forever, daemon=True)
        cls.thread.start()
        cls.url = "http://127.0.0.1:{0}".format(cls.server.server_address[1])

    @classmethod
    def tearDownClass(cls):
        cls.server.shutdown()
        cls.server.server_close()

    def transport(self, kind, path="", deterministic=True):
        desc = PortDescriptor(
            kind, self.url + path, Capabilities(deterministic=deterministic)
        )
        return (desc, HttpTransport(desc, timeout=5.0, backoff=0.01))

    def test_generate(self):
        (desc, transport) = self.transport(PortKind.TEXT_GENERATOR)
        self.assertEqual(TextGenerator(desc, transport).generate("abc"), "cba")

    def test_retries_idempotent_ops(self):
        (desc, transport) = self.transport(PortKind.EMBEDDER, "/down")
        self.assertRaises(PortUnavailable, transport.call, "embed", {"text": "x"})
        self.assertEqual(self.server.hits["/down/embed"], 3)

    def test_no_retry_for_sampled_generation(self):
        (desc, transport) = self.transport(PortKind.TEXT_GENERATOR, "/down", deterministic=False)
        self.assertRaises(PortUnavailable, transport.call, "generate", {"prompt": "x"})
        self.assertEqual(self.server.hits["/down/generate"], 1)

    def test_protocol_errors(self):
        (desc, transport) = self.transport(PortKind.NLI_JUDGE)
        self.assertRaises(ProtocolError, transport.call, "nli", {})
        self.assertRaises(ProtocolError, transport.call, "score", {})

    def test_unreachable(self):
        desc = PortDescriptor(PortKind.EMBEDDER, "http://127.0.0.1:9")
        transport = HttpTransport(desc, timeout=2.0, attempts=1)
        self.assertRaises(PortUnavailable, transport.call, "embed", {"text": "x"})

    def test_llm_adapters_over_http(self):
        gen = open_port(PortDescriptor(PortKind.QA_GENERATOR, self.url))
        self.assertIsInstance(gen, LLMQAGenerator)
        masker = open_port(PortDescriptor(PortKind.ENTITY_MASKER, self.url))
        self.assertIsInstance(masker, LLMEntityMasker)


class PortTest(unittest.TestCase):
    def test_descriptor(self):
        self.assertRaises(
            PortConfigError,
            PortDescriptor,
            PortKind.EMBEDDER,
            "fixture:/tmp",
            Capabilities(deterministic=False),
        )
        self.assertRaises(
            PortConfigError,
            PortDescriptor,
            PortKind.EMBEDDER,
            "builtin:hashing",
            Capabilities(max_concurrency=0),
        )
        desc = PortDescriptor.from_dict(
            {"kind": "embedder", "endpoint": "https://example.org/v1"}
        )
        self.assertEqual((desc.scheme(), desc.location()), ("https", "//example.org/v1"))
        self.assertEqual(PortDescriptor.from_dict(desc.to_dict()), desc)

    def test_no_transport(self):
        self.assertRaises(PortUnavailable, TextGenerator().generate, "x")
        self.assertRaises(MaskerUnavailable, EntityMasker().mask, "x")

    def test_reply_validation(self):
        class Fixed(Transport):
            def __init__(self, reply):
                self.reply = reply

            def call(self, op, payload):
                return self.reply

        self.assertRaises(LengthZero, TokenScorer(transport=Fixed({})).score, "p", "")
        for bad in ({}, {"token_probs": []}, {"token_probs": [0.0]}, {"token_probs": [True]}):
            self.assertRaises(
                ProtocolError, TokenScorer(transport=Fixed(bad)).score, "p", "t"
            )
        self.assertEqual(
            TokenScorer(transport=Fixed({"token_probs": [0.5, 1]})).score("p", "t"),
            [0.5, 1.0],
        )
        self.assertRaises(ProtocolError, TextGenerator(transport=Fixed([])).generate, "p")

    def test_builtin_adapters(self):
        emb = open_port(PortDescriptor(PortKind.EMBEDDER, "builtin:hashing"))
        self.assertIsInstance(emb, HashingEmbedder)
        masker = open_port(
            PortDescriptor(PortKind.ENTITY_MASKER, "builtin:rules"), entities=["Acme"]
        )
        self.assertIsInstance(masker, RuleBasedMasker)
        self.assertRaises(
            PortConfigError, open_port, PortDescriptor(PortKind.EMBEDDER, "builtin:nope")
        )
        self.assertRaises(
            PortConfigError, open_port, PortDescriptor(PortKind.EMBEDDER, "builtin:rules")
        )
        self.assertRaises(
            PortConfigError, open_port, PortDescriptor(PortKind.EMBEDDER, "ftp://host")
        )

    def test_concurrency_bound(self):
        class Slow(Transport):
            def __init__(self):
                self.lock = threading.Lock()
                self.active = 0
                self.peak = 0

            def call(self, op, payload):
                with self.lock:
                    self.active += 1
                    self.peak = max(self.peak, self.active)
                time.sleep(0.02)
                with self.lock:
                    self.active -= 1
                return {"text": payload["prompt"]}

        transport = Slow()
        desc = PortDescriptor(
            PortKind.TEXT_GENERATOR, "builtin:", Capabilities(max_concurrency=2)
        )
        gen = TextGenerator(desc, transport)
        items = [("q{0}".format(i), str(i)) for i in range(8)]
        replies = fan_out(gen, items, gen.generate)
        self.assertEqual(replies, {"q{0}".format(i): str(i) for i in range(8)})
        self.assertLessEqual(transport.peak, 2)
        self.assertRaises(PortError, fan_out, gen, [("a", "x"), ("a", "y")], gen.generate)


class OfflineAdapterTest(unittest.TestCase):
    def test_template_generator(self):
        gen = TemplateQAGenerator(
            {("When was {X} born?", "Marie Curie"): AnswerEntry("1867", ["7 November 1867"])}
        )
        qa = gen.fill("when  was {X} born?", "Marie Curie")
        self.assertEqual(qa.question, "when  was Marie Curie born?")
        self.assertEqual((qa.answer, qa.aliases), ("1867", ("7 November 1867",)))
        self.assertIsNone(gen.fill("When was {X} born?", "Nobody"))

    def test_lexical_nli(self):
        nli = LexicalNLIJudge()
        self.assertEqual(nli.nli("Honolulu", "He grew up in Honolulu."), NLILabel.ENTAILMENT)
        self.assertEqual(nli.nli("Honolulu", "He grew up in Chicago."), NLILabel.NEUTRAL)

    def test_hashing_embedder(self):
        emb = HashingEmbedder(n_features=64)
        v = emb.embed("born in 1961")
        self.assertEqual(v.shape, (64,))
        self.assertAlmostEqual(float((v ** 2).sum()), 1.0)
        self.assertRaises(ProtocolError, emb.embed, "?!")


class LLMAdapterTest(unittest.TestCase):
    def test_masker(self):
        gen = Scripted(['Sure: {"masked_question": "When was {X} born?"}'])
        masker = LLMEntityMasker(gen)
        self.assertEqual(masker.mask("When was Barack Obama born?"), [(9, 21)])
        self.assertIn("When was Barack Obama born?", gen.prompts[0])
        self.assertEqual(masker.mask(""), [])

    def test_masker_reads_list_replies(self):
        gen = Scripted(
            [
                "Output:\n[{'question': 'When was Barack Obama born?', "
                "'masked_question': 'When was {X} born?'}]"
            ]
        )
        masker = LLMEntityMasker(gen)
        self.assertEqual(masker.mask("When was Barack Obama born?"), [(9, 21)])
        self.assertIn("[{'question': 'When was Barack Obama born?'}]", gen.prompts[0])

    def test_masker_rejects_rewrites(self):
        gen = Scripted(['{"masked_question": "Who is {X}?"}', "no json here"])
        masker = LLMEntityMasker(gen)
        self.assertRaises(ProtocolError, masker.mask, "When was Barack Obama born?")
        self.assertRaises(ProtocolError, masker.mask, "When was Barack Obama born?")

    def test_masker_unavailable(self):
        masker = LLMEntityMasker(TextGenerator())
        self.assertRaises(MaskerUnavailable, masker.mask, "When was Barack Obama born?")

    def test_qa_generator(self):
        qa_reply = json.dumps(
            {
                "entity": "Taylor Swift",
                "questions": [
                    {
                        "question": "What is the title of Taylor Swift's debut album?",
                        "answers": ["Taylor Swift"],
                    },
                    {
                        "question": "When was Taylor Swift born?",
                        "answers": ["1989", "December 13, 1989", " "],
                    },
                ],
            }
        )
        gen = Scripted(
            [
                '{"name": "Taylor Swift", "question": "When was Taylor Swift born?"}',
                qa_reply,
                '{"question": ""}',
            ]
        )
        qa = LLMQAGenerator(gen, passages={"Taylor Swift": "Taylor Alison Swift (born 1989)"})
        out = qa.fill("When was {X} born?", "Taylor Swift")
        self.assertEqual(out.question, "When was Taylor Swift born?")
        self.assertEqual(out.answer, "1989")
        self.assertEqual(out.aliases, ("December 13, 1989",))
        self.assertIn("When was x born?", gen.prompts[0])
        self.assertIn("Taylor Alison Swift (born 1989)", gen.prompts[1])
        self.assertIn("Generate 40 questions", gen.prompts[1])
        self.assertIsNone(qa.fill("When was {X} born?", "Nobody"))

    def test_qa_generator_needs_a_close_question(self):
        gen = Scripted(
            [
                '{"name": "Taylor Swift", "question": "When was Taylor Swift born?"}',
                '{"questions": [{"question": "Who produced Red?", "answers": ["Max Martin"]}]}',
            ]
        )
        self.assertIsNone(LLMQAGenerator(gen).fill("When was {X} born?", "Taylor Swift"))

    def test_parse_json_reply(self):
        self.assertEqual(parse_json_reply('x {"a": 1} y'), {"a": 1})
        self.assertEqual(parse_json_reply("{'a': [1, 'b']}"), {"a": [1, "b"]})
        self.assertRaises(ProtocolError, parse_json_reply, "{not json}")
        self.assertRaises(ProtocolError, parse_json_reply, "[1, 2]")


class PortSubclassTest(unittest.TestCase):
    def test_default_descriptor(self):
        port = HashingEmbedder()
        self.assertEqual(port.descriptor.kind, PortKind.EMBEDDER)
        self.assertEqual(port.max_concurrency, 1)
        self.assertTrue(isinstance(port, Port))
