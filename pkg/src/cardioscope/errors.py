"""Exception hierarchy shared by every module.

Each error carries a stable ``code`` (the class name) so the CLI can emit
machine-readable failure lines.
"""


class CardioscopeError(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


class InputError(CardioscopeError, ValueError):
    """Bad caller input (shape, range, format)."""


# signal_io
class MalformedHeader(InputError):
    pass


class UnsupportedEncoding(InputError):
    pass


class MalformedRow(InputError):
    pass


class DuplicateId(InputError):
    pass


class EmptyClass(InputError):
    pass


class InputTooLong(InputError):
    pass


class InputTooShort(InputError):
    pass


class EmptySignal(InputError):
    pass


# dsp / nn / models
class InvalidParams(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class BatchTooSmall(InputError):
    pass


class NonFinite(CardioscopeError, ArithmeticError):
    pass


class DegenerateMinority(InputError):
    pass


class DegenerateData(InputError):
    pass


class AllZero(InputError):
    pass


class NoConvergence(CardioscopeError, RuntimeError):
    pass


class UntrainedModel(CardioscopeError, RuntimeError):
    pass


class EmptyBatch(InputError):
    pass


class InsufficientAbnormal(InputError):
    pass


# evaluation
class EmptyInput(InputError):
    pass


class UndefinedMetric(CardioscopeError, ArithmeticError):
    pass


class OneClassOnly(InputError):
    pass


# cli
class UnknownCommand(CardioscopeError):
    pass


class ConfigInvalid(CardioscopeError):
    pass


class DataMissing(CardioscopeError):
    pass
