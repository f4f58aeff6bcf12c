"""Exception hierarchy shared by every module."""


class MacdLabError(Exception):
    """Base class for all package errors."""


# -- market data -------------------------------------------------------------

class MarketDataError(MacdLabError):
    pass


class MalformedHeader(MarketDataError):
    pass


class MalformedRow(MarketDataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateDate(MalformedRow):
    pass


class EmptySeries(MarketDataError):
    pass


class InvertedRange(MarketDataError, ValueError):
    pass


class NetworkFailure(MarketDataError):
    pass


class ProviderRejection(MarketDataError):
    pass


class InvalidSeries(MarketDataError):
    """Raised when a series with violations is used where a valid one is required."""


# -- indicators / signals ----------------------------------------------------

class IndicatorError(MacdLabError, ValueError):
    pass


class WindowTooLarge(IndicatorError):
    pass


class SeriesTooShort(IndicatorError):
    pass


class NonPositiveMiddle(IndicatorError):
    pass


class ZeroVolumeWindow(IndicatorError):
    pass


class MisalignedSeries(MacdLabError, ValueError):
    pass


# -- optimizer / config ------------------------------------------------------

class InfeasibleRanges(MacdLabError, ValueError):
    pass


class ConfigError(MacdLabError, ValueError):
    pass
