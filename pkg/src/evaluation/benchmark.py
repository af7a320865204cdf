"""
Inference speed per rendering resolution: end-to-end image -> parameters,
single stream, warm-up iterations excluded from the timing.
"""

import logging
import time
from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence

import torch
from tqdm import tqdm

from src.config import RENDER_RESOLUTIONS
from src.errors import ConfigError
from src.model.network import build_network
from src.training.checkpoint import Checkpoint

logger = logging.getLogger(__name__)


@dataclass
class BenchRow:
    resolution: int
    iterations: int
    seconds: float
    fps: float
    ms_per_image: float

    def to_dict(self):
        return asdict(self)


def transfer_weights(model: torch.nn.Module, state: dict) -> int:
    """Copy every tensor whose name and shape match; returns the number skipped"""
    own = model.state_dict()
    compatible = {k: v for k, v in state.items() if k in own and own[k].shape == v.shape}
    own.update(compatible)
    model.load_state_dict(own)
    return len(own) - len(compatible)


@torch.no_grad()
def time_inference(model: torch.nn.Module, image: torch.Tensor, iterations: int, warmup: int) -> float:
    for _ in range(warmup):
        model(image, 0.0)
    start = time.perf_counter()
    for _ in range(iterations):
        model(image, 0.0)
    return time.perf_counter() - start


def bench(checkpoint: Checkpoint, resolutions: Sequence[int] = RENDER_RESOLUTIONS,
          iterations: Optional[int] = None, warmup: Optional[int] = None,
          show_progress: bool = False) -> List[BenchRow]:
    """fps of the checkpoint's network re-rendered at each resolution"""
    config = checkpoint.config
    iterations = iterations if iterations is not None else config.bench_iters
    warmup = warmup if warmup is not None else config.bench_warmup
    bad = [r for r in resolutions if r not in RENDER_RESOLUTIONS]
    if bad:
        raise ConfigError(f"bench resolutions must be in {RENDER_RESOLUTIONS}, got {bad}")

    generator = torch.Generator().manual_seed(config.seed)
    image = torch.rand(1, config.image_size, config.image_size, 3, generator=generator)

    rows = []
    for res in tqdm(resolutions, desc='bench', disable=not show_progress, leave=False):
        variant = config.with_overrides(feature_map_res=res)
        model, _ = build_network(variant, checkpoint.num_joints, checkpoint.num_betas, with_decoder=False)
        skipped = transfer_weights(model, checkpoint.model_state)
        if skipped:
            logger.info(f"Resolution {res}: {skipped} tensors keep their initial values (shape differs)")
        model.eval()
        seconds = time_inference(model, image, iterations, warmup)
        fps = iterations / seconds if seconds > 0 else float('inf')
        rows.append(BenchRow(res, iterations, seconds, fps, 1000.0 * seconds / iterations))
        logger.info(f"Resolution {res}x{res}: {fps:.1f} fps over {iterations} iterations")
    return rows
