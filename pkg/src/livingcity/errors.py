"""Exception hierarchy shared by every layer.

Each error carries a stable ``code`` (the class name) so the wire protocol can
report it without leaking tracebacks.
"""


class LivingCityError(Exception):
    """Base class for all engine errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class DomainError(LivingCityError, ValueError):
    """An argument lies outside the domain of a balance formula or catalog field."""


class ConfigurationError(LivingCityError):
    pass


class CatalogParseError(LivingCityError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


# world
class CategoryBusy(LivingCityError):
    pass


class InsufficientFunds(LivingCityError):
    pass


class LevelTooLow(LivingCityError):
    pass


class StageCapReached(LivingCityError):
    pass


class RoleCapReached(LivingCityError):
    pass


class NotAvailable(LivingCityError):
    """The requested shared resource was already taken by someone else."""


class NotEmployed(LivingCityError):
    pass


class UnknownEntity(LivingCityError):
    pass


# market
class NoFreeSlot(LivingCityError):
    pass


class InvalidParams(LivingCityError):
    pass


class CallClosed(LivingCityError):
    pass


class BidTooLow(LivingCityError):
    pass


class SelfBid(LivingCityError):
    pass


class NotYetDue(LivingCityError):
    pass


class NoLicense(LivingCityError):
    pass


class WrongCategory(LivingCityError):
    pass


# service
class Unauthenticated(LivingCityError):
    pass


class MalformedCommand(LivingCityError):
    pass


class UnknownView(LivingCityError):
    pass


class InputRejected(LivingCityError):
    """A free-text field tripped the injection filter."""


class GapInLog(LivingCityError):
    pass


class HashMismatch(LivingCityError):
    """Replay diverged from the recorded run. Always a bug."""


ERRORS_BY_CODE = {
    cls.__name__: cls
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, LivingCityError)
}
