"""
Tests for L{pyidql.processor}.
"""
import os
import unittest

import numpy as np

from pyidql import constants
from pyidql.processor import BaseProcessor, ReportRecorder, CsvReportWriter, call_processors
from pyidql.critic import CriticConfig, TrainReport, train_critic
from pyidql.dataset import OfflineDataset, generate_bandit_dataset
from pyidql.envs import DiscreteBandit
from pyidql.exceptions import DivergenceError

from .base import TestBase


class ProcessorHelper(BaseProcessor):
    """
    Test processor implementation
    """
    def __init__(self):
        BaseProcessor.__init__(self)
        self.called = {}  # fname -> number of calls

    def _called(self, name):
        self.called[name] = self.called.get(name, 0) + 1

    def on_install(self, loop, **kwargs):
        assert not self.called.get("after_train", 0)
        BaseProcessor.on_install(self, loop, **kwargs)
        self._called("on_install")

    def on_report(self, **kwargs):
        assert self.called.get("on_install", 0)
        assert not self.called.get("after_train", 0)
        assert isinstance(kwargs["report"], TrainReport)
        self._called("on_report")

    def on_divergence(self, **kwargs):
        assert self.called.get("on_install", 0)
        assert isinstance(kwargs["snapshot"], dict)
        self.snapshot = kwargs["snapshot"]
        self._called("on_divergence")

    def after_train(self, **kwargs):
        assert self.called.get("on_install", 0)
        self._called("after_train")


class ProcessorTests(unittest.TestCase, TestBase):
    """
    Tests for L{pyidql.processor}.
    """
    def get_config(self, **kwargs):
        """
        Return a critic configuration of tiny networks.

        @param kwargs: values to replace
        @type kwargs: L{dict}
        @rtype: L{pyidql.critic.CriticConfig}
        """
        values = {"hidden_dim": 8, "n_hidden": 1, "batch_size": 8, "steps": 3, "report_interval": 2}
        values.update(kwargs)
        return CriticConfig(**values)

    def test_base_processor(self):
        """
        Test that the default implementations do nothing but remember the loop.
        """
        processor = BaseProcessor()
        self.assertIsNone(processor.loop)
        processor.on_install("critic")
        self.assertEqual(processor.loop, "critic")
        processor.on_report(report=None)
        processor.on_evaluation(step=0, mean=0.0, std=0.0)
        processor.on_divergence(snapshot={})
        processor.after_train(extra="ignored")

    def test_call_processors(self):
        """
        Test L{pyidql.processor.call_processors}.
        """
        processors = [ReportRecorder(), ReportRecorder()]
        call_processors(processors, "on_evaluation", step=10, mean=1.0, std=0.5)
        call_processors(processors, "on_report", report="a")
        for processor in processors:
            self.assertEqual(processor.evaluations, [(10, 1.0, 0.5)])
            self.assertEqual(processor.reports, ["a"])
        # no processors is fine
        call_processors([], "after_train")

    def test_training_events(self):
        """
        Test the events emitted by a critic training loop.
        """
        dataset = generate_bandit_dataset(DiscreteBandit(), 20, self.get_rng())
        helper = ProcessorHelper()
        recorder = ReportRecorder()
        _, reports = train_critic(self.get_config(), dataset, self.get_rng(), processors=[helper, recorder])
        self.assertEqual(helper.loop, "critic")
        self.assertEqual(helper.called, {"on_install": 1, "on_report": 2, "after_train": 1})
        self.assertEqual(len(reports), 2)
        self.assertEqual([r.step for r in recorder.reports], [2, 3])

    def test_divergence_event(self):
        """
        Test that processors learn about a divergence before it is raised.
        """
        n = 10
        states = np.zeros((n, 1))
        dataset = OfflineDataset(
            states, np.ones((n, 1)), np.full(n, np.inf), states, np.ones(n), env_id="broken",
        )
        helper = ProcessorHelper()
        with self.assertRaises(DivergenceError):
            train_critic(self.get_config(), dataset, self.get_rng(), processors=[helper])
        self.assertEqual(helper.called.get("on_divergence"), 1)
        self.assertNotIn("after_train", helper.called)
        self.assertEqual(helper.snapshot["step"], 0)
        self.assertIn("norms", helper.snapshot)

    def test_csv_writer(self):
        """
        Test L{pyidql.processor.CsvReportWriter}.
        """
        dataset = generate_bandit_dataset(DiscreteBandit(), 20, self.get_rng())
        with self.open_temp_dir() as tempdir:
            path = os.path.join(tempdir, "critic.csv")
            writer = CsvReportWriter(path)
            with self.assertLogs("pyidql.processor", level=constants.LOG_LEVEL_REPORT):
                train_critic(self.get_config(steps=4), dataset, self.get_rng(), processors=[writer])
            self.assertEqual(writer.rows_written, 2)
            with open(path) as fin:
                lines = fin.read().splitlines()
        self.assertEqual(lines[0], ",".join(TrainReport.FIELDS))
        self.assertEqual(len(lines), 3)
        self.assertEqual([line.split(",")[0] for line in lines[1:]], ["2", "4"])

    def test_csv_writer_unused(self):
        """
        Test that a writer without reports creates no file.
        """
        with self.open_temp_dir() as tempdir:
            path = os.path.join(tempdir, "critic.csv")
            writer = CsvReportWriter(path)
            writer.on_install("critic")
            writer.after_train()
            self.assertFalse(os.path.exists(path))
            self.assertEqual(writer.rows_written, 0)

    def test_csv_writer_closed_on_error(self):
        """
        Test that leaving the writer context closes the file, also on errors.
        """
        report = TrainReport(step=1, v_loss=0.5, q_loss=0.25, mean_v=1.0, mean_q=2.0)
        with self.open_temp_dir() as tempdir:
            path = os.path.join(tempdir, "critic.csv")
            with self.assertRaises(RuntimeError):
                with CsvReportWriter(path) as writer:
                    writer.on_install("critic")
                    writer.on_report(report=report)
                    raise RuntimeError("interrupted")
            self.assertIsNone(writer._f)
            with open(path) as fin:
                lines = fin.read().splitlines()
        self.assertEqual(lines, [",".join(TrainReport.FIELDS), ",".join(str(v) for v in report.to_row())])
