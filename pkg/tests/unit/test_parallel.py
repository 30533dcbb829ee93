import threading
import time
import unittest
from typing import Callable, Any

from unlearnlab.parallel import run_tasks, MultipleExceptions

__all__ = ["ParallelTest"]


class ExampleTask:
    name: str
    todo: Callable[[], Any]

    def __init__(self, name, todo):
        self.name = name
        self.todo = todo


class ComplexException(Exception):
    def __init__(self, arg1: str, arg2: str) -> None:
        pass


def err(msg: str):
    raise Exception(msg)


def complex_err(msg1: str, msg2: str):
    raise ComplexException(msg1, msg2)


class ParallelTest(unittest.TestCase):
    def test_okay(self):
        self.assertEqual(
            run_tasks(
                1,
                [ExampleTask("foo", lambda: "ok"), ExampleTask("bar", lambda: "ok")],
                lambda task: task.todo(),
            ),
            ["ok", "ok"],
        )

    def test_no_tasks(self):
        self.assertEqual(run_tasks(4, [], lambda task: task.todo()), [])

    def test_submission_order(self):
        def slow(n):
            time.sleep(0.01 * (5 - n))
            return n

        tasks = [ExampleTask(str(n), (lambda n=n: slow(n))) for n in range(5)]
        self.assertEqual(run_tasks(5, tasks, lambda task: task.todo()), [0, 1, 2, 3, 4])

    def test_falsy_results_kept(self):
        tasks = [ExampleTask("a", lambda: 0), ExampleTask("b", lambda: None)]
        self.assertEqual(run_tasks(2, tasks, lambda task: task.todo()), [0, None])

    def test_one_worker_per_task(self):
        seen = set()
        barrier = threading.Barrier(3, timeout=5)

        def work():
            barrier.wait()
            seen.add(threading.get_ident())
            return True

        tasks = [ExampleTask(str(n), work) for n in range(3)]
        self.assertEqual(run_tasks(-1, tasks, lambda task: task.todo()), [True] * 3)
        self.assertEqual(len(seen), 3)

    def test_bad_worker_count(self):
        self.assertRaises(
            ValueError, run_tasks, 0, [ExampleTask("foo", lambda: 1)], lambda t: t.todo()
        )

    def test_one_exception(self):
        self.assertRaises(
            Exception,
            run_tasks,
            1,
            [
                ExampleTask("foo", lambda: "ok"),
                ExampleTask("bar", lambda: err("oh no")),
            ],
            lambda task: task.todo(),
        )

    def test_two_exceptions(self):
        with self.assertRaises(MultipleExceptions) as ctx:
            run_tasks(
                1,
                [
                    ExampleTask("foo", lambda: err("uh oh")),
                    ExampleTask("bar", lambda: err("oh no")),
                ],
                lambda task: task.todo(),
            )
        self.assertEqual(sorted(ctx.exception.exceptions), ["bar", "foo"])
        self.assertIn("* bar: oh no", str(ctx.exception))

    def test_complicated_exception(self):
        self.assertRaises(
            ComplexException,
            run_tasks,
            1,
            [ExampleTask("foo", lambda: complex_err("uh", "oh"))],
            lambda task: task.todo(),
        )
