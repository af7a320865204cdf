"""
Checkpoint container: versioned torch-serialized dict of all learnable
weights plus the run configuration that shaped them.
"""

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch

from src.config import RunConfig
from src.errors import CheckpointError, ConfigError
from src.model.network import FeatureFieldHMR, build_network
from src.model.regression_heads import SilhouetteDecoder

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

# keys that change parameter shapes or the forward computation
ARCHITECTURE_KEYS = ('image_size', 'channels', 'field_width', 'field_depth', 'n_samples',
                     'feature_map_res', 'octaves_x', 'octaves_r', 'aggregation', 'attention', 'feature_field',
                     'orbit_radius', 'near', 'far', 'bound_radius', 'regressor_iters', 'regressor_hidden')


@dataclass
class Checkpoint:
    config: RunConfig
    model_state: Dict[str, torch.Tensor]
    decoder_state: Optional[Dict[str, torch.Tensor]]
    num_joints: int
    num_betas: int
    step: int = 0
    epoch: int = 0
    asset_hash: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {
            'format_version': CHECKPOINT_FORMAT_VERSION,
            'config': self.config.to_dict(),
            'model_state': self.model_state,
            'decoder_state': self.decoder_state,
            'num_joints': self.num_joints,
            'num_betas': self.num_betas,
            'step': self.step,
            'epoch': self.epoch,
            'asset_hash': self.asset_hash,
        }

    def check_compatible(self, config: RunConfig):
        """Raise CheckpointError if config would build a different network"""
        mismatched = [key for key in ARCHITECTURE_KEYS
                      if getattr(config, key) != getattr(self.config, key)]
        if mismatched:
            details = ', '.join(f"{k}: checkpoint={getattr(self.config, k)!r} config={getattr(config, k)!r}"
                                for k in mismatched)
            raise CheckpointError(f"Checkpoint does not match config ({details})")


def capture(model: FeatureFieldHMR, decoder: Optional[SilhouetteDecoder], step: int = 0, epoch: int = 0,
            asset_hash: str = '') -> Checkpoint:
    """Snapshot of the current weights (cloned, on CPU)"""
    def cpu_state(module):
        return {k: v.detach().cpu().clone() for k, v in module.state_dict().items()}

    return Checkpoint(
        config=model.config,
        model_state=cpu_state(model),
        decoder_state=cpu_state(decoder) if decoder is not None else None,
        num_joints=model.regressor.num_joints,
        num_betas=model.regressor.init_shape.shape[1],
        step=step,
        epoch=epoch,
        asset_hash=asset_hash,
    )


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    """Write atomically: temp file in the same directory, then rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_suffix(path.suffix + '.tmp')
    with open(temp_path, 'wb') as handle:
        torch.save(checkpoint.to_dict(), handle)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(temp_path, path)
    logger.info(f"Checkpoint saved: {path} (epoch {checkpoint.epoch}, step {checkpoint.step})")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        data = torch.load(path, map_location='cpu', weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Checkpoint {path} could not be read: {e}")

    version = data.get('format_version') if isinstance(data, dict) else None
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint format version {version} "
                              f"(expected {CHECKPOINT_FORMAT_VERSION})")
    try:
        config = RunConfig.from_mapping(data['config'])
        return Checkpoint(config=config, model_state=data['model_state'],
                          decoder_state=data['decoder_state'], num_joints=int(data['num_joints']),
                          num_betas=int(data['num_betas']), step=int(data['step']),
                          epoch=int(data['epoch']), asset_hash=str(data.get('asset_hash', '')))
    except KeyError as e:
        raise CheckpointError(f"Checkpoint {path} is missing {e}")
    except ConfigError as e:
        raise CheckpointError(f"Checkpoint {path} holds an invalid config: {e}")


def restore_network(checkpoint: Checkpoint, with_decoder: bool = False,
                    config: Optional[RunConfig] = None) -> Tuple[FeatureFieldHMR, Optional[SilhouetteDecoder]]:
    """Rebuild the network from a checkpoint; shapes are validated by strict loading"""
    if config is not None:
        checkpoint.check_compatible(config)
    model, decoder = build_network(checkpoint.config, checkpoint.num_joints, checkpoint.num_betas,
                                   with_decoder=with_decoder)
    try:
        model.load_state_dict(checkpoint.model_state, strict=True)
        if decoder is not None:
            if checkpoint.decoder_state is None:
                raise CheckpointError("Checkpoint has no silhouette decoder weights")
            decoder.load_state_dict(checkpoint.decoder_state, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint weights do not fit the network: {e}")
    return model, decoder


def file_hash(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()
