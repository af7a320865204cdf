"""
Training objectives: canonical-view regression, arbitrary-view imagination
and cross-view consistency, plus the label-dependent dispatch that mixes them.

Every distance is a squared L2 summed over the example's entries, except the
silhouette term, which is the mean over pixels. Per-example losses are
(B,) tensors; total_loss averages over the batch.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import torch

from src.body.body_model import BodyModel, weak_perspective
from src.body.rotations import batch_rodrigues, rotate_about_vertical, rotate_global_orient_rotmat
from src.data.labels import LabeledBatch
from src.errors import InvalidInputError, LossContractError, ShapeMismatchError
from src.model.network import FeatureFieldHMR, ViewPrediction
from src.model.regression_heads import SilhouetteDecoder
from src.rendering.rasterizer import SILHOUETTE_RES, silhouette_from_vertices

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class LossWeights:
    lambda_2d: float = 300.0
    lambda_3d: float = 300.0
    lambda_pose: float = 60.0
    lambda_shape: float = 0.06
    lambda_silh: float = 30.0

    def __post_init__(self):
        if min(self.lambda_2d, self.lambda_3d, self.lambda_pose, self.lambda_shape, self.lambda_silh) < 0:
            raise InvalidInputError("loss weights must be non-negative")

    @classmethod
    def from_config(cls, config) -> 'LossWeights':
        return cls(config.lambda_2d, config.lambda_3d, config.lambda_pose,
                   config.lambda_shape, config.lambda_silh)


@dataclass
class BodyOutputs:
    """Differentiable body quantities predicted at one viewing direction"""
    rotmats: torch.Tensor                      # (B, K, 3, 3)
    shape_beta: torch.Tensor                   # (B, num_betas)
    joints3d: Optional[torch.Tensor] = None    # (B, N_j, 3)
    keypoints2d: Optional[torch.Tensor] = None  # (B, N_j, 2)

    @classmethod
    def from_prediction(cls, pred: ViewPrediction, body: BodyModel) -> 'BodyOutputs':
        _, joints = body.forward_rotmats(pred.rotmats, pred.shape_beta)
        return cls(pred.rotmats, pred.shape_beta, joints, weak_perspective(joints, pred.camera_pi))


def _sq(diff: torch.Tensor) -> torch.Tensor:
    """Squared L2 per example over every trailing dimension"""
    return diff.pow(2).flatten(1).sum(dim=1)


def _check(pred: torch.Tensor, gt: torch.Tensor, name: str):
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"{name}: prediction {tuple(pred.shape)} vs ground truth {tuple(gt.shape)}")


def gt_rotmats(pose_theta: torch.Tensor) -> torch.Tensor:
    return batch_rodrigues(pose_theta.reshape(pose_theta.shape[0], -1, 3))


def canonical_terms(pred: BodyOutputs, gt: LabeledBatch, w: LossWeights) -> Dict[str, torch.Tensor]:
    """Weighted per-example terms of the canonical-view loss; 3D terms vanish without 3D labels"""
    _check(pred.keypoints2d, gt.keypoints2d, 'keypoints2d')
    _check(pred.joints3d, gt.joints3d, 'joints3d')
    _check(pred.shape_beta, gt.shape_beta, 'shape_beta')
    target_rot = gt_rotmats(gt.pose_theta).to(pred.rotmats.dtype)
    _check(pred.rotmats, target_rot, 'pose')

    mask = gt.has_3d.to(pred.joints3d.dtype)
    return {
        '2d': w.lambda_2d * _sq(pred.keypoints2d - gt.keypoints2d),
        '3d': mask * w.lambda_3d * _sq(pred.joints3d - gt.joints3d),
        'pose': mask * w.lambda_pose * _sq(pred.rotmats - target_rot),
        'shape': mask * w.lambda_shape * _sq(pred.shape_beta - gt.shape_beta),
    }


def canonical_loss(pred: BodyOutputs, gt: LabeledBatch, w: LossWeights) -> torch.Tensor:
    return sum(canonical_terms(pred, gt, w).values())


def imagination_terms(pred: BodyOutputs, silhouettes: torch.Tensor, gt: LabeledBatch, phi: torch.Tensor,
                      w: LossWeights, gt_silhouettes: torch.Tensor) -> Dict[str, torch.Tensor]:
    """Weighted per-example terms of the imagination loss at azimuth phi (B,).

    Targets are the ground truth seen from phi: joints rotated by R_y(-phi),
    global orientation re-expressed for the moved viewer, shape unchanged.
    """
    if not bool(gt.has_3d.all()):
        raise LossContractError("imagination loss needs 3D labels for every example")
    phi = torch.as_tensor(phi, dtype=pred.joints3d.dtype, device=pred.joints3d.device)
    target_joints = rotate_about_vertical(gt.joints3d.to(phi.dtype), -phi)
    target_rot = rotate_global_orient_rotmat(gt_rotmats(gt.pose_theta).to(phi.dtype), phi)
    _check(pred.joints3d, target_joints, 'joints3d')
    _check(pred.rotmats, target_rot, 'pose')
    _check(pred.shape_beta, gt.shape_beta, 'shape_beta')
    _check(silhouettes, gt_silhouettes, 'silhouette')

    return {
        '3d': w.lambda_3d * _sq(pred.joints3d - target_joints),
        'silh': w.lambda_silh * (silhouettes - gt_silhouettes).pow(2).flatten(1).mean(dim=1),
        'pose': w.lambda_pose * _sq(pred.rotmats - target_rot),
        'shape': w.lambda_shape * _sq(pred.shape_beta - gt.shape_beta),
    }


def imagination_loss(pred: BodyOutputs, silhouettes: torch.Tensor, gt: LabeledBatch, phi: torch.Tensor,
                     w: LossWeights, gt_silhouettes: torch.Tensor) -> torch.Tensor:
    return sum(imagination_terms(pred, silhouettes, gt, phi, w, gt_silhouettes).values())


def consistency_terms(pred1: BodyOutputs, pred2: BodyOutputs, phi1: torch.Tensor, phi2: torch.Tensor,
                      w: LossWeights) -> Dict[str, torch.Tensor]:
    """Pose seen from phi1, moved to phi2, must match the pose predicted at phi2; shapes must agree"""
    _check(pred1.rotmats, pred2.rotmats, 'pose')
    _check(pred1.shape_beta, pred2.shape_beta, 'shape_beta')
    delta = torch.as_tensor(phi2, dtype=pred1.rotmats.dtype) - torch.as_tensor(phi1, dtype=pred1.rotmats.dtype)
    moved = rotate_global_orient_rotmat(pred1.rotmats, delta)
    return {
        'pose': w.lambda_pose * _sq(moved - pred2.rotmats),
        'shape': w.lambda_shape * _sq(pred1.shape_beta - pred2.shape_beta),
    }


def consistency_loss(pred1: BodyOutputs, pred2: BodyOutputs, phi1: torch.Tensor, phi2: torch.Tensor,
                     w: LossWeights) -> torch.Tensor:
    return sum(consistency_terms(pred1, pred2, phi1, phi2, w).values())


def ground_truth_silhouettes(vertices: torch.Tensor, faces: np.ndarray, phi: torch.Tensor,
                             res: int = SILHOUETTE_RES) -> torch.Tensor:
    """Rasterized ground-truth masks (B, res, res) of stored meshes seen from phi"""
    verts = vertices.detach().cpu().double().numpy()
    angles = torch.as_tensor(phi).detach().cpu().double().numpy().reshape(-1)
    masks = [silhouette_from_vertices(v, faces, float(a), res) for v, a in zip(verts, angles)]
    return torch.as_tensor(np.stack(masks), dtype=vertices.dtype, device=vertices.device)


def total_loss(batch: LabeledBatch, model: FeatureFieldHMR, decoder: Optional[SilhouetteDecoder],
               body: BodyModel, w: LossWeights, generator: Optional[torch.Generator] = None,
               use_imagination: bool = True, use_consistency: bool = True,
               stratified: bool = True) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """Batch-mean objective and its per-term breakdown.

    Every example gets the canonical loss. Examples with 3D labels add the
    imagination loss at one random azimuth; 2D-only examples add the
    consistency loss over one random pair of azimuths.
    """
    n = len(batch)
    if n == 0:
        raise InvalidInputError("empty batch")
    dtype = batch.images.dtype
    device = batch.images.device

    # all azimuths are drawn up front so the stream does not depend on the flags
    phi_imag = torch.rand(n, generator=generator, dtype=dtype, device=device) * TWO_PI
    phi1 = torch.rand(n, generator=generator, dtype=dtype, device=device) * TWO_PI
    phi2 = torch.rand(n, generator=generator, dtype=dtype, device=device) * TWO_PI

    z_fg = model.encode_latent(batch.images)
    canonical = BodyOutputs.from_prediction(
        model.infer_at(z_fg, 0.0, stratified=stratified, generator=generator), body)
    terms = {f'canonical_{k}': v for k, v in canonical_terms(canonical, batch, w).items()}

    zeros = torch.zeros(n, dtype=dtype, device=device)
    for key in ('imag_3d', 'imag_silh', 'imag_pose', 'imag_shape', 'cons_pose', 'cons_shape'):
        terms[key] = zeros

    idx3 = torch.nonzero(batch.has_3d, as_tuple=True)[0]
    idx2 = torch.nonzero(~batch.has_3d, as_tuple=True)[0]

    if use_imagination and len(idx3) > 0:
        if decoder is None:
            raise LossContractError("imagination loss needs the silhouette decoder")
        sub = batch.subset(idx3)
        phi = phi_imag[idx3]
        pred = model.infer_at(z_fg[idx3], phi, stratified=stratified, generator=generator)
        silhouettes = decoder(pred.feature_map.f_phi)
        gt_silh = ground_truth_silhouettes(sub.vertices, body.faces, phi, silhouettes.shape[-1])
        for k, v in imagination_terms(BodyOutputs.from_prediction(pred, body), silhouettes,
                                      sub, phi, w, gt_silh).items():
            terms[f'imag_{k}'] = zeros.index_add(0, idx3, v)

    if use_consistency and len(idx2) > 0:
        z2 = z_fg[idx2]
        pred1 = model.infer_at(z2, phi1[idx2], stratified=stratified, generator=generator)
        pred2 = model.infer_at(z2, phi2[idx2], stratified=stratified, generator=generator)
        out1 = BodyOutputs(pred1.rotmats, pred1.shape_beta)
        out2 = BodyOutputs(pred2.rotmats, pred2.shape_beta)
        for k, v in consistency_terms(out1, out2, phi1[idx2], phi2[idx2], w).items():
            terms[f'cons_{k}'] = zeros.index_add(0, idx2, v)

    breakdown = {f'loss/{k}': v.mean() for k, v in terms.items()}
    breakdown['loss/canonical'] = sum(breakdown[f'loss/canonical_{k}'] for k in ('2d', '3d', 'pose', 'shape'))
    breakdown['loss/imagination'] = sum(breakdown[f'loss/imag_{k}'] for k in ('3d', 'silh', 'pose', 'shape'))
    breakdown['loss/consistency'] = breakdown['loss/cons_pose'] + breakdown['loss/cons_shape']
    loss = breakdown['loss/canonical'] + breakdown['loss/imagination'] + breakdown['loss/consistency']
    breakdown['loss/total'] = loss
    return loss, breakdown
