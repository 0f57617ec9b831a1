"""exceptions raised across the workbench

Each maps onto a process exit code in :mod:`rbdet.workbench.cli`.

"""


class RBDetError(Exception):
    """root of the package's exception hierarchy"""

    exit_code = 1


class ConfigError(RBDetError, ValueError):
    """a contract on shapes, sizes, or configuration values is broken"""

    exit_code = 2


class TrainingError(RBDetError, RuntimeError):
    """training diverged

    :param epoch: int, the epoch in which the loss stopped being finite

    """

    exit_code = 3

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None
                         else f'{message} (epoch {epoch})')
        self.epoch = epoch


class ParseError(RBDetError, ValueError):
    """a manifest or report file violates its schema

    :param field: str, name of the offending field

    :param location: str, path to it within the document,
    e.g. 'annotations[3].image_id'

    """

    exit_code = 4

    def __init__(self, message, field=None, location=None):
        super().__init__(message if location is None
                         else f'{location}: {message}')
        self.field = field
        self.location = location


class GenerationError(RBDetError, RuntimeError):
    """rejection sampling of a synthetic scene gave up"""


class MetricUndefined(RBDetError, ArithmeticError):
    """a metric has an empty denominator"""
