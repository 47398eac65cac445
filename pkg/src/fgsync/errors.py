class FgsyncError(Exception):
    """Base class for all package errors."""


class ConfigError(FgsyncError, ValueError):
    pass


class DataError(FgsyncError, ValueError):
    """Malformed or unusable measurement data."""


class PipelineError(FgsyncError, RuntimeError):
    pass


class NoCoreMeasurementsError(DataError):
    def __init__(self, msg: str = "no core measurements"):
        super().__init__(msg)


class CombinationExplosionError(PipelineError):
    def __init__(self, n: int, cap: int):
        super().__init__(
            f"combination explosion: {n} core measurements exceed n_max={cap}; "
            "shrink the epoch window"
        )
        self.n = n
        self.cap = cap


class NoConnectedCandidateError(PipelineError):
    def __init__(self, epoch: int, diagnostics: dict):
        super().__init__(f"no connected candidate in epoch {epoch}: {diagnostics}")
        self.epoch = epoch
        self.diagnostics = diagnostics


class RankDeficientError(PipelineError):
    """Normal equations are singular; a disconnected or gauge-free graph slipped through."""

    def __init__(self, deficiency: int, epoch: int | None = None):
        where = "" if epoch is None else f" (epoch {epoch})"
        super().__init__(f"rank deficient by {deficiency}{where}")
        self.deficiency = deficiency
        self.epoch = epoch
