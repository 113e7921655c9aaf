"""Exception hierarchy shared across the platform."""


class ArenaError(Exception):
    """Base class for all platform errors."""


# -- time / domain ----------------------------------------------------------

class NonDivisible(ArenaError):
    """Horizon is not an integer multiple of the frequency step."""


# -- SCD2 store -------------------------------------------------------------

class ClockRegression(ArenaError):
    """Transaction time precedes the current version's valid_from."""


class UnknownSeries(ArenaError):
    pass


# -- ingestion --------------------------------------------------------------

class ProviderUnavailable(ArenaError):
    """Transient provider failure; the scheduler retries with backoff."""


class MalformedRecord(ArenaError):
    """A single bad point; skipped and counted, never aborts the batch."""


# -- orchestration ----------------------------------------------------------

class NoEligibleSeries(ArenaError):
    pass


class InsufficientEligible(ArenaError):
    pass


class StillInRegistration(ArenaError):
    """Alias reveal requested before registration closed."""


class UnknownChallenge(ArenaError):
    pass


# -- gateway ----------------------------------------------------------------

class MissingDisclosure(ArenaError):
    def __init__(self, field: str):
        super().__init__(f"missing required disclosure field: {field}")
        self.field = field


class InvalidApiKey(ArenaError):
    pass


class UnknownModel(ArenaError):
    pass


class NotInRegistration(ArenaError):
    pass


class UnknownAlias(ArenaError):
    pass


class RateLimited(ArenaError):
    def __init__(self, retry_after_seconds: float):
        super().__init__(f"rate limit exceeded, retry after {retry_after_seconds:.1f}s")
        self.retry_after_seconds = retry_after_seconds


class DeadlinePassed(ArenaError):
    pass


class WrongLength(ArenaError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected {expected} forecast values, got {got}")
        self.expected = expected
        self.got = got


class NonFiniteValue(ArenaError):
    pass


class Unauthorized(ArenaError):
    pass


# -- evaluation -------------------------------------------------------------

class InsufficientContext(ArenaError):
    pass


class NoActuals(ArenaError):
    pass


class NotClosed(ArenaError):
    pass


# -- baselines --------------------------------------------------------------

class EmptyContext(ArenaError):
    pass


class InsufficientSeasonalHistory(ArenaError):
    pass


# -- simulation -------------------------------------------------------------

class OffGrid(ArenaError):
    pass


class ScenarioInvalid(ArenaError):
    pass


class AssertionFailed(ArenaError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"scenario assertion '{name}' failed: {detail}")
        self.name = name
        self.detail = detail
