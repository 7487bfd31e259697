"""Exception types shared across all pipeline stages."""


class PnmfError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(PnmfError):
    """Operands have non-conformable shapes."""


class WriteRejected(PnmfError):
    """Tensor contains non-finite entries and may not be persisted."""


class FormatError(PnmfError):
    """File is not a recognizable tensor container."""


class CorruptFile(PnmfError):
    """Container payload fails its checksum or is truncated."""


class ParseError(PnmfError):
    """Malformed annotation or configuration input."""


class EmptyClass(PnmfError):
    """A class has no samples where at least one is required."""


class DegenerateInput(PnmfError):
    """Input is valid in shape but useless in content (e.g. all-zero matrix)."""


class DegenerateVariance(PnmfError):
    """Statistic undefined because the relevant variance is zero."""


class ZeroVector(PnmfError):
    """A column with zero norm cannot be normalized."""


class BadConfig(PnmfError):
    """Configuration value outside its permitted range."""


class TrainingDiverged(PnmfError):
    """Loss became non-finite during optimization."""

    def __init__(self, iteration: int):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration


class StateError(PnmfError):
    """Operation called before its required cached state exists."""


class ScheduleMismatch(PnmfError):
    """Denoiser invoked with a diffusion schedule it was not trained on."""


class TargetContractError(PnmfError):
    """Attack target does not expose a required capability (e.g. gradients)."""


class DependencyError(PnmfError):
    """A pipeline stage is missing an upstream artifact."""

    def __init__(self, missing: str, run_first: str):
        super().__init__(f"missing artifact {missing!r}: run stage {run_first!r} first")
        self.missing = missing
        self.run_first = run_first
