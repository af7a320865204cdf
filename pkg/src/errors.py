"""
Exception hierarchy for the mesh recovery pipeline.
Library code raises these; the CLI turns them into a diagnostic and exit code 1.
"""

from typing import Optional


class MeshRecoveryError(Exception):
    """Base class for every validated failure in the pipeline"""


class ConfigError(MeshRecoveryError, ValueError):
    """Invalid, unknown or out-of-range configuration value"""


class ShapeMismatchError(MeshRecoveryError, ValueError):
    """Input array or tensor does not have the expected shape"""


class InvalidInputError(MeshRecoveryError, ValueError):
    """Input violates a precondition (non-finite values, non-positive scale, ...)"""


class AssetError(MeshRecoveryError):
    """Body model asset file is missing, malformed or violates an invariant"""


class DatasetError(MeshRecoveryError):
    """Dataset file could not be read; names the offending record when known"""

    def __init__(self, message: str, record_index: Optional[int] = None):
        if record_index is not None:
            message = f"{message} (record {record_index})"
        super().__init__(message)
        self.record_index = record_index


class CheckpointError(MeshRecoveryError):
    """Checkpoint is missing, has the wrong version, or does not match the config"""


class LossContractError(MeshRecoveryError, ValueError):
    """A loss was called on examples that lack the labels it needs"""


class TrainingDivergedError(MeshRecoveryError):
    """Loss became non-finite during training"""

    def __init__(self, step: int, terms: Optional[dict] = None):
        super().__init__(f"Non-finite loss at step {step}: {terms or {}}")
        self.step = step
        self.terms = terms or {}
