"""
Seeded end-to-end training loop with per-step structured logging,
per-epoch checkpoints and a hard stop on non-finite losses.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch
from tqdm import tqdm

from src.body.body_model import BodyModel
from src.config import RunConfig
from src.data.labels import LabeledExample, collate
from src.errors import InvalidInputError, TrainingDivergedError
from src.model.network import FeatureFieldHMR
from src.model.regression_heads import SilhouetteDecoder
from src.training.checkpoint import Checkpoint, capture, save_checkpoint
from src.training.losses import LossWeights, total_loss

logger = logging.getLogger(__name__)


class StepLogWriter:
    """Line-delimited JSON training log, one record per optimisation step"""

    def __init__(self, log_file: Optional[Union[str, Path]]):
        self.log_file = Path(log_file) if log_file else None
        self.records: List[dict] = []
        if self.log_file:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            self.log_file.write_text('')

    def record_step(self, step: int, epoch: int, terms: Dict[str, float], learning_rate: float,
                    status: str = 'ok') -> dict:
        entry = {
            'step': step,
            'epoch': epoch,
            'status': status,
            'learning_rate': learning_rate,
            'wall_time': time.time(),
            **terms,
        }
        self.records.append(entry)
        if self.log_file:
            with open(self.log_file, 'a') as handle:
                handle.write(json.dumps(entry, allow_nan=True) + '\n')
        return entry

    @staticmethod
    def read(log_file: Union[str, Path]) -> List[dict]:
        with open(log_file) as handle:
            return [json.loads(line) for line in handle if line.strip()]


@dataclass
class TrainingResult:
    steps: int
    epochs: int
    final_loss: float
    final_terms: Dict[str, float] = field(default_factory=dict)
    checkpoint: Optional[Checkpoint] = None
    checkpoint_paths: List[Path] = field(default_factory=list)


class Trainer:
    def __init__(self, config: RunConfig, body: BodyModel, model: FeatureFieldHMR,
                 decoder: Optional[SilhouetteDecoder], out_dir: Optional[Union[str, Path]] = None,
                 asset_hash: str = '', show_progress: bool = True):
        self.config = config
        self.body = body
        self.model = model
        self.decoder = decoder
        self.out_dir = Path(out_dir) if out_dir else None
        self.asset_hash = asset_hash
        self.show_progress = show_progress
        self.weights = LossWeights.from_config(config)

        params = list(model.parameters()) + (list(decoder.parameters()) if decoder is not None else [])
        self.parameters = params
        self.optimizer = torch.optim.Adam(params, lr=config.learning_rate,
                                          betas=(config.adam_beta1, config.adam_beta2))
        self.generator = torch.Generator().manual_seed(config.seed)
        self.rng = np.random.default_rng(config.seed)
        self.log = StepLogWriter(self.out_dir / 'train_log.jsonl' if self.out_dir else None)
        self.step = 0

    def _batches(self, n: int) -> List[np.ndarray]:
        order = self.rng.permutation(n)
        return [order[i:i + self.config.batch_size] for i in range(0, n, self.config.batch_size)]

    def train_step(self, examples: Sequence[LabeledExample], epoch: int) -> Dict[str, float]:
        dtype = next(self.model.parameters()).dtype
        batch = collate(examples, self.body.num_joints, self.body.num_betas,
                        self.body.asset.num_vertices, dtype=dtype)

        self.optimizer.zero_grad()
        loss, breakdown = total_loss(batch, self.model, self.decoder, self.body, self.weights,
                                     generator=self.generator,
                                     use_imagination=self.config.use_imagination,
                                     use_consistency=self.config.use_consistency)
        terms = {k: float(v.detach()) for k, v in breakdown.items()}

        if not math.isfinite(terms['loss/total']):
            self.log.record_step(self.step, epoch, terms, self.config.learning_rate, status='diverged')
            logger.error(f"Non-finite loss at step {self.step}: {terms}")
            raise TrainingDivergedError(self.step, terms)

        loss.backward()
        if self.config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.parameters, self.config.grad_clip)
        self.optimizer.step()

        self.log.record_step(self.step, epoch, terms, self.config.learning_rate)
        self.step += 1
        return terms

    def train(self, examples: Sequence[LabeledExample], max_steps: Optional[int] = None,
              final_path: Optional[Union[str, Path]] = None) -> TrainingResult:
        """Run config.epochs epochs (or stop after max_steps) and checkpoint"""
        if not examples:
            raise InvalidInputError("no training examples")
        self.model.train()
        if self.decoder is not None:
            self.decoder.train()

        logger.info(f"Training on {len(examples)} examples for {self.config.epochs} epochs "
                    f"(batch {self.config.batch_size}, lr {self.config.learning_rate})")
        terms: Dict[str, float] = {}
        paths: List[Path] = []
        epoch = 0
        done = False
        for epoch in range(1, self.config.epochs + 1):
            batches = self._batches(len(examples))
            progress = tqdm(batches, desc=f"epoch {epoch}/{self.config.epochs}",
                            disable=not self.show_progress, leave=False)
            for index in progress:
                terms = self.train_step([examples[i] for i in index], epoch)
                progress.set_postfix(loss=f"{terms['loss/total']:.4f}")
                if max_steps is not None and self.step >= max_steps:
                    done = True
                    break
            logger.info(f"Epoch {epoch} finished at step {self.step}: loss {terms.get('loss/total', float('nan')):.5f}")
            if self.config.checkpoint_every_epoch and self.out_dir:
                paths.append(save_checkpoint(self.snapshot(epoch), self.out_dir / f'epoch_{epoch:03d}.pt'))
            if done:
                break

        if self.config.epochs == 0:
            epoch = 0
        final = self.snapshot(epoch)
        if final_path is not None:
            paths.append(save_checkpoint(final, final_path))

        return TrainingResult(steps=self.step, epochs=epoch,
                              final_loss=terms.get('loss/total', float('nan')),
                              final_terms=terms, checkpoint=final, checkpoint_paths=paths)

    def snapshot(self, epoch: int) -> Checkpoint:
        return capture(self.model, self.decoder, step=self.step, epoch=epoch, asset_hash=self.asset_hash)
