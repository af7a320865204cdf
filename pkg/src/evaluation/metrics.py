"""
Evaluation metrics: MPJPE (root-aligned), PA-MPJPE (similarity-aligned),
PVE, and ESV, the spread of inferred shape over a full azimuth sweep.
Inputs are numpy arrays in model units.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np

from src.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-9


def _pair(pred, gt) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeMismatchError(f"expected two equal N x 3 arrays, got {pred.shape} and {gt.shape}")
    return pred, gt


def mpjpe(pred, gt, root: int = 0) -> float:
    """Mean joint distance after moving both root joints to the origin"""
    pred, gt = _pair(pred, gt)
    return float(np.linalg.norm((pred - pred[root]) - (gt - gt[root]), axis=1).mean())


@dataclass
class Alignment:
    aligned: np.ndarray
    rotation: np.ndarray
    scale: float
    translation: np.ndarray
    degenerate: bool


def procrustes_align(S1: np.ndarray, S2: np.ndarray) -> Alignment:
    """Similarity transform (s, R, t) taking N x 3 points S1 closest to S2.

    Flags configurations whose centred point sets have rank < 2 (coincident or
    collinear points), where the rotation is not unique.
    """
    X1 = S1.T
    X2 = S2.T
    mu1 = X1.mean(axis=1, keepdims=True)
    mu2 = X2.mean(axis=1, keepdims=True)
    X1 = X1 - mu1
    X2 = X2 - mu2

    var1 = np.sum(X1 ** 2)
    K = X1.dot(X2.T)
    U, s, Vh = np.linalg.svd(K)
    V = Vh.T

    spread = max(np.linalg.norm(X1), np.linalg.norm(X2), 1.0)
    rank1 = np.linalg.svd(X1, compute_uv=False)
    rank2 = np.linalg.svd(X2, compute_uv=False)
    degenerate = bool(rank1[1] <= DEGENERACY_TOL * spread or rank2[1] <= DEGENERACY_TOL * spread)

    if var1 <= DEGENERACY_TOL ** 2:
        rotation = np.eye(3)
        scale = 0.0
    else:
        # orientation fix keeps det(R) = +1
        Z = np.eye(3)
        Z[-1, -1] = 1.0 if np.linalg.det(U.dot(V.T)) >= 0 else -1.0
        rotation = V.dot(Z.dot(U.T))
        scale = float(np.trace(rotation.dot(K)) / var1)

    t = mu2 - scale * rotation.dot(mu1)
    aligned = (scale * rotation.dot(S1.T) + t).T
    return Alignment(aligned, rotation, scale, t.ravel(), degenerate)


def pa_mpjpe(pred, gt, return_flag: bool = False):
    """Mean joint distance after the optimal similarity alignment of pred onto gt"""
    pred, gt = _pair(pred, gt)
    if pred.shape[0] < 3:
        raise ShapeMismatchError("PA-MPJPE needs at least 3 joints")
    alignment = procrustes_align(pred, gt)
    if alignment.degenerate:
        logger.warning("Degenerate joint configuration in PA-MPJPE; rotation is not unique")
    error = float(np.linalg.norm(alignment.aligned - gt, axis=1).mean())
    return (error, alignment.degenerate) if return_flag else error


def pve(pred_vertices, gt_vertices) -> float:
    """Mean per-vertex distance, no alignment"""
    pred, gt = _pair(pred_vertices, gt_vertices)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


@dataclass
class EvalReport:
    mpjpe: float
    pa_mpjpe: float
    pve: float
    per_example: List[Dict[str, Any]] = field(default_factory=list)

    @classmethod
    def from_examples(cls, per_example: List[Dict[str, Any]]) -> 'EvalReport':
        if not per_example:
            return cls(float('nan'), float('nan'), float('nan'), [])
        return cls(
            mpjpe=float(np.mean([r['mpjpe'] for r in per_example])),
            pa_mpjpe=float(np.mean([r['pa_mpjpe'] for r in per_example])),
            pve=float(np.mean([r['pve'] for r in per_example])),
            per_example=per_example,
        )

    def summary(self) -> Dict[str, float]:
        return {'mpjpe': self.mpjpe, 'pa_mpjpe': self.pa_mpjpe, 'pve': self.pve,
                'n_examples': len(self.per_example),
                'n_degenerate': sum(bool(r.get('degenerate')) for r in self.per_example)}

    def to_dict(self) -> Dict[str, Any]:
        return {**self.summary(), 'per_example': self.per_example}


def evaluate_example(index: int, pred_joints, gt_joints, pred_vertices, gt_vertices) -> Dict[str, Any]:
    error, degenerate = pa_mpjpe(pred_joints, gt_joints, return_flag=True)
    return {'index': index, 'mpjpe': mpjpe(pred_joints, gt_joints), 'pa_mpjpe': error,
            'pve': pve(pred_vertices, gt_vertices), 'degenerate': degenerate}


class ShapeSweeper(Protocol):
    def infer_betas(self, image, phis) -> np.ndarray: ...


@dataclass
class ESVReport:
    per_coefficient_sigma: np.ndarray
    esv: float
    step_deg: float = 1.0
    per_image: Optional[List[float]] = None

    def to_dict(self) -> Dict[str, Any]:
        out = {'esv': self.esv, 'step_deg': self.step_deg,
               'per_coefficient_sigma': [float(v) for v in self.per_coefficient_sigma]}
        if self.per_image is not None:
            out['per_image'] = list(self.per_image)
        return out


def esv_from_betas(betas: np.ndarray, step_deg: float = 1.0) -> ESVReport:
    """Population standard deviation of every coefficient over the sweep, then the mean"""
    betas = np.asarray(betas, dtype=np.float64)
    sigma = betas.std(axis=0, ddof=0)
    return ESVReport(per_coefficient_sigma=sigma, esv=float(sigma.mean()), step_deg=step_deg)


def sweep_angles(step_deg: float = 1.0) -> np.ndarray:
    count = int(round(360.0 / step_deg))
    return np.arange(count) * math.radians(step_deg)


def esv(model: ShapeSweeper, image, step_deg: float = 1.0) -> ESVReport:
    """Infer shape at azimuths 0, step, ..., 360 - step and report the spread"""
    betas = model.infer_betas(image, sweep_angles(step_deg))
    return esv_from_betas(betas, step_deg)


def aggregate_esv(reports: List[ESVReport]) -> ESVReport:
    """Dataset-level report: sigma and ESV averaged over images"""
    sigma = np.mean([r.per_coefficient_sigma for r in reports], axis=0)
    return ESVReport(per_coefficient_sigma=sigma, esv=float(np.mean([r.esv for r in reports])),
                     step_deg=reports[0].step_deg, per_image=[r.esv for r in reports])
