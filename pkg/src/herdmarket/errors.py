"""Exception types shared across the package."""


class HerdMarketError(Exception):
    """Base class for all package errors."""


class FrozenMarketError(HerdMarketError):
    """Raised when the aggregate action rate is zero (no agent wants to act)."""


class DivergedError(HerdMarketError):
    """Raised when a price, demand or integrator state becomes non-finite."""


class EventBudgetError(HerdMarketError):
    """Raised when a simulation exceeds its configured event cap."""


class MomentsUnavailableError(HerdMarketError):
    """Raised when demand moments are needed but neither closed forms nor a
    signal sampler are available."""


class ConfigError(HerdMarketError):
    """Raised on invalid experiment configuration files."""
