"""Exception hierarchy shared across the toolkit."""


class TouchAuthError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TouchAuthError):
    pass


class DataError(TouchAuthError):
    pass


class MalformedRow(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UserTooSmall(DataError):
    def __init__(self, user_id):
        super().__init__(f"user {user_id!r} has fewer than 2 swipes")
        self.user_id = user_id


class DegenerateSwipe(DataError):
    pass


class EmptySeries(DataError):
    pass


class SingleClass(DataError):
    pass


class MinorityTooSmall(DataError):
    pass


class NonFiniteLoss(TouchAuthError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class SingleClassFold(DataError):
    def __init__(self, fold: int):
        super().__init__(f"fold {fold} is missing a class")
        self.fold = fold


class InsufficientGenuineData(DataError):
    pass


class NoImpostorData(DataError):
    def __init__(self, dataset_id):
        super().__init__(f"no impostor windows available in dataset {dataset_id!r}")
        self.dataset_id = dataset_id


class EmptyPool(DataError):
    pass


class DimensionMismatch(TouchAuthError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected dimension {expected}, got {got}")
        self.expected = expected
        self.got = got


class EmptyList(DataError):
    pass


class TooFewSamples(DataError):
    pass


class GroupTooSmall(DataError):
    pass
