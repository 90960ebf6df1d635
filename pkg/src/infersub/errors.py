"""Exception types shared across the package."""

from __future__ import annotations


class InferSubError(Exception):
    """Base class for all errors raised by this package."""


class SplitArityError(InferSubError):
    """Requested split count is outside 1..layer_count."""


class NoRouteError(InferSubError):
    """No up path exists between two nodes."""

    def __init__(self, src: str, dst: str) -> None:
        super().__init__(f"no route from {src!r} to {dst!r}")
        self.src = src
        self.dst = dst


class UnknownFnError(InferSubError):
    """Function id is not in the catalog."""


class UnknownPredicateError(InferSubError):
    """Predicate id is not in the catalog."""


class UnexpectedInputError(InferSubError):
    """A funnel was offered a publication from an input it does not declare."""


class MixedVersionsError(InferSubError):
    """Updates being aggregated disagree on version."""


class MixedModelsError(InferSubError):
    """Updates being aggregated disagree on model id."""


class LengthMismatchError(InferSubError):
    """Update deltas have differing lengths."""


class SearchSpaceTooLargeError(InferSubError):
    """Exhaustive placement would exceed the enumeration bound."""

    def __init__(self, size: int, bound: int) -> None:
        super().__init__(f"search space {size} exceeds bound {bound}")
        self.size = size
        self.bound = bound


class NoFeasiblePlacementError(InferSubError):
    """No assignment satisfies the resource and pinning constraints."""


class NoPublisherError(InferSubError):
    """An inference subscription's filter matches no bound topic."""


class AmbiguousPublisherError(InferSubError):
    """A privacy split needs a single publisher but several match."""


class UnknownModelError(InferSubError):
    """Model id cannot be resolved locally or through any reachable peer."""


class UnknownSubscriptionError(InferSubError):
    """Subscription id is not registered with this broker."""


class StaleVersionError(InferSubError):
    """Model registration carries a version at or below the current one."""

    def __init__(self, model_id: str, offered: int, current: int) -> None:
        super().__init__(
            f"model {model_id!r} version {offered} is stale (current {current})"
        )
        self.model_id = model_id
        self.offered = offered
        self.current = current


class InstanceTerminatedError(InferSubError):
    """Operation addressed a pipeline instance that is no longer live."""


class DuplicatePeerError(InferSubError):
    """A peering for that domain already exists."""


class ParseError(InferSubError):
    """Scenario text is not syntactically valid."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ValidationError(InferSubError):
    """Scenario parsed but violates a structural rule."""

    def __init__(self, path: str, rule: str) -> None:
        super().__init__(f"{path}: {rule}")
        self.path = path
        self.rule = rule
