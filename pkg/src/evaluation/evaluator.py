"""
Canonical-view evaluation of a trained network over labelled examples,
and the dataset-level ESV sweep.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from src.body.body_model import BodyModel
from src.data.labels import LabeledExample
from src.evaluation.metrics import ESVReport, EvalReport, aggregate_esv, esv, evaluate_example
from src.model.network import FeatureFieldHMR

logger = logging.getLogger(__name__)


@torch.no_grad()
def predict_meshes(model: FeatureFieldHMR, body: BodyModel, images: np.ndarray):
    """Vertices and joints (numpy, float64) inferred at the canonical direction"""
    model.eval()
    dtype = next(model.parameters()).dtype
    batch = torch.as_tensor(np.asarray(images), dtype=dtype) / 255.0
    pred = model(batch, 0.0)
    vertices, joints = body.forward_rotmats(pred.rotmats.to(body.template.dtype),
                                            pred.shape_beta.to(body.template.dtype))
    return vertices.double().numpy(), joints.double().numpy(), pred


def evaluate(model: FeatureFieldHMR, body: BodyModel, examples: Sequence[LabeledExample],
             batch_size: int = 32, show_progress: bool = False) -> EvalReport:
    """MPJPE / PA-MPJPE / PVE over the examples that carry 3D labels"""
    labelled = [(i, ex) for i, ex in enumerate(examples) if ex.has_3d]
    skipped = len(examples) - len(labelled)
    if skipped:
        logger.info(f"Skipping {skipped} examples without 3D labels")

    rows = []
    chunks = range(0, len(labelled), batch_size)
    for start in tqdm(chunks, desc='evaluate', disable=not show_progress, leave=False):
        chunk = labelled[start:start + batch_size]
        vertices, joints, _ = predict_meshes(model, body, np.stack([ex.image for _, ex in chunk]))
        for (index, ex), v, j in zip(chunk, vertices, joints):
            rows.append(evaluate_example(index, j, ex.joints3d, v, ex.vertices))

    report = EvalReport.from_examples(rows)
    logger.info(f"Evaluated {len(rows)} examples: MPJPE {report.mpjpe:.4f}, "
                f"PA-MPJPE {report.pa_mpjpe:.4f}, PVE {report.pve:.4f}")
    return report


def esv_over_examples(model: FeatureFieldHMR, examples: Sequence[LabeledExample], step_deg: float = 1.0,
                      limit: Optional[int] = None, show_progress: bool = False) -> ESVReport:
    model.eval()
    dtype = next(model.parameters()).dtype
    chosen = list(examples)[:limit] if limit else list(examples)
    reports: List[ESVReport] = []
    for ex in tqdm(chosen, desc='esv', disable=not show_progress, leave=False):
        image = torch.as_tensor(ex.image, dtype=dtype)[None] / 255.0
        reports.append(esv(model, image, step_deg))
    report = aggregate_esv(reports)
    logger.info(f"ESV over {len(reports)} images: {report.esv:.6f}")
    return report
