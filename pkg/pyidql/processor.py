"""
Processors provide a way to monitor the events of training and evaluation loops.

For example, a processor can record the training reports of a critic,
write them to a CSV file as they arrive or keep the evaluation curve of
an online finetuning run.

@var logger: logger used by this module
@type logger: L{logging.Logger}
"""
import csv
import logging

from . import constants


logger = logging.getLogger(__name__)


class BaseProcessor(object):
    """
    Base class for processors.

    Each method will be called during certain events of a training loop.
    They should all take any number of keyword arguments (C{**kwargs}) as
    we expect more arguments to be added over time. The default
    implementations of these methods are NO-OP.

    @ivar loop: name of the loop this processor is installed on
    @type loop: L{str} or L{None}
    """
    loop = None

    def on_install(self, loop, **kwargs):
        """
        Called when this processor is installed on a training loop.

        By default, this sets L{BaseProcessor.loop}.

        @param loop: name of the loop, e.g. C{"critic"}
        @type loop: L{str}
        @param kwargs: extra keyword arguments
        @type kwargs: L{dict}
        """
        self.loop = loop

    def on_report(self, **kwargs):
        """
        Called when a training report has been produced.

        Keyword arguments:

            - C{report}: the report, an object with a C{to_row()} method and a C{FIELDS} attribute

        @param kwargs: extra keyword arguments
        @type kwargs: L{dict}
        """
        pass

    def on_evaluation(self, **kwargs):
        """
        Called when a policy has been evaluated during training.

        Keyword arguments:

            - C{step} (L{int}): environment step of the evaluation
            - C{mean} (L{float}): mean evaluation return
            - C{std} (L{float}): standard deviation of the evaluation return

        @param kwargs: extra keyword arguments
        @type kwargs: L{dict}
        """
        pass

    def on_divergence(self, **kwargs):
        """
        Called when a non-finite loss has been encountered, before the loop aborts.

        Keyword arguments:

            - C{snapshot} (L{dict}): diagnostic information

        @param kwargs: extra keyword arguments
        @type kwargs: L{dict}
        """
        pass

    def after_train(self, **kwargs):
        """
        Called when the training loop has finished.

        @param kwargs: extra keyword arguments
        @type kwargs: L{dict}
        """
        pass


class ReportRecorder(BaseProcessor):
    """
    A processor keeping every report and evaluation in memory.

    @ivar reports: the reports in order of arrival
    @type reports: L{list}
    @ivar evaluations: (step, mean, std) tuples in order of arrival
    @type evaluations: L{list} of L{tuple}
    """
    def __init__(self):
        """
        The default constructor.
        """
        self.reports = []
        self.evaluations = []

    def on_report(self, **kwargs):
        self.reports.append(kwargs["report"])

    def on_evaluation(self, **kwargs):
        self.evaluations.append((kwargs["step"], kwargs["mean"], kwargs["std"]))


class CsvReportWriter(BaseProcessor):
    """
    A processor writing every report as a CSV row.

    The header row is written with the first report.

    @ivar path: path of the CSV file
    @type path: L{str}
    @ivar rows_written: number of rows written so far, header excluded
    @type rows_written: L{int}
    """
    def __init__(self, path):
        """
        The default constructor.

        @param path: path of the CSV file to write
        @type path: L{str}
        """
        self.path = path
        self.rows_written = 0
        self._f = None
        self._writer = None

    def on_report(self, **kwargs):
        report = kwargs["report"]
        if self._writer is None:
            self._f = open(self.path, "w", newline="")
            self._writer = csv.writer(self._f, lineterminator="\n")
            self._writer.writerow(report.FIELDS)
        self._writer.writerow(report.to_row())
        self.rows_written += 1
        logger.log(constants.LOG_LEVEL_REPORT, "{} report: {}".format(self.loop, report.to_row()))

    def on_divergence(self, **kwargs):
        self.close()

    def after_train(self, **kwargs):
        self.close()

    def close(self):
        """
        Close the CSV file, if it was opened.
        """
        if self._f is not None:
            self._f.close()
            self._f = None
            self._writer = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.close()


def call_processors(processors, event, **kwargs):
    """
    Call an event method on every processor.

    @param processors: processors to call
    @type processors: L{list} of L{BaseProcessor}
    @param event: name of the event method
    @type event: L{str}
    @param kwargs: keyword arguments of the event
    @type kwargs: L{dict}
    """
    for processor in processors:
        getattr(processor, event)(**kwargs)
