"""
Heads on top of the rendered view: the iterative body-parameter regressor
and the training-only silhouette decoder of the geometric guidance branch.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.body.body_model import BodyParams
from src.body.rotations import rot6d_to_rotmat, rotmat_to_axis_angle
from src.config import RENDER_RESOLUTIONS
from src.errors import InvalidInputError, ShapeMismatchError

logger = logging.getLogger(__name__)

DECODER_BASE_RES = 4
DECODER_STAGES = 5


@dataclass
class RegressorState:
    """Parameter estimate after `iteration` refinement steps"""
    pose6d: torch.Tensor      # (B, K*6)
    shape_beta: torch.Tensor  # (B, num_betas)
    camera_pi: torch.Tensor   # (B, 3)
    iteration: int = 0

    @property
    def rotmats(self) -> torch.Tensor:
        batch = self.pose6d.shape[0]
        return rot6d_to_rotmat(self.pose6d.reshape(batch, -1, 6))

    def to_body_params(self) -> BodyParams:
        """Axis-angle boundary form; not differentiable"""
        pose = rotmat_to_axis_angle(self.rotmats.detach()).flatten(1)
        return BodyParams(pose, self.shape_beta.detach(), self.camera_pi.detach())


class IterativeRegressor(nn.Module):
    """Iterative error feedback: [z_phi, pose, shape, cam] -> deltas, repeated"""

    def __init__(self, feat_dim: int, num_joints: int, num_betas: int,
                 hidden: int = 256, iterations: int = 3):
        super().__init__()
        npose = num_joints * 6
        self.iterations = iterations
        self.num_joints = num_joints

        self.fc1 = nn.Linear(feat_dim + npose + num_betas + 3, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.decpose = nn.Linear(hidden, npose)
        self.decshape = nn.Linear(hidden, num_betas)
        self.deccam = nn.Linear(hidden, 3)
        nn.init.xavier_uniform_(self.decpose.weight, gain=0.01)
        nn.init.xavier_uniform_(self.decshape.weight, gain=0.01)
        nn.init.xavier_uniform_(self.deccam.weight, gain=0.01)

        # mean parameters: identity rotations, zero shape, s=1, t=0
        identity6d = torch.tensor([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        self.register_buffer('init_pose', identity6d.repeat(num_joints)[None])
        self.register_buffer('init_shape', torch.zeros(1, num_betas))
        self.register_buffer('init_cam', torch.tensor([[1.0, 0.0, 0.0]]))

    def initial_state(self, batch_size: int) -> RegressorState:
        return RegressorState(self.init_pose.expand(batch_size, -1),
                              self.init_shape.expand(batch_size, -1),
                              self.init_cam.expand(batch_size, -1), 0)

    def forward(self, z_phi: torch.Tensor, init: Optional[RegressorState] = None) -> RegressorState:
        if not torch.isfinite(z_phi).all():
            raise InvalidInputError("view feature contains non-finite values")
        state = init or self.initial_state(z_phi.shape[0])
        pred_pose, pred_shape, pred_cam = state.pose6d, state.shape_beta, state.camera_pi

        for _ in range(self.iterations):
            xc = torch.cat([z_phi, pred_pose, pred_shape, pred_cam], dim=1)
            xc = F.relu(self.fc1(xc))
            xc = F.relu(self.fc2(xc))
            pred_pose = self.decpose(xc) + pred_pose
            pred_shape = self.decshape(xc) + pred_shape
            pred_cam = self.deccam(xc) + pred_cam

        return RegressorState(pred_pose, pred_shape, pred_cam, state.iteration + self.iterations)


class SilhouetteDecoder(nn.Module):
    """Five stride-2 transposed convolutions, 4x4 -> 128x128, sigmoid output.

    Maps at another supported resolution are resampled to 4x4 first.
    """

    def __init__(self, channels: int):
        super().__init__()
        widths = [channels] + [max(channels // 2 ** (i + 1), 4) for i in range(DECODER_STAGES - 1)] + [1]
        layers = []
        for i in range(DECODER_STAGES):
            layers.append(nn.ConvTranspose2d(widths[i], widths[i + 1], 4, stride=2, padding=1))
            if i < DECODER_STAGES - 1:
                layers += [nn.BatchNorm2d(widths[i + 1]), nn.ReLU(inplace=True)]
        self.layers = nn.Sequential(*layers)

    def forward(self, f_phi: torch.Tensor) -> torch.Tensor:
        height, width = f_phi.shape[-2:]
        if height != width or height not in RENDER_RESOLUTIONS:
            raise ShapeMismatchError(f"silhouette decoder needs a square map of size {RENDER_RESOLUTIONS}, "
                                     f"got {height}x{width}")
        if height != DECODER_BASE_RES:
            f_phi = F.interpolate(f_phi, size=(DECODER_BASE_RES, DECODER_BASE_RES),
                                  mode='bilinear', align_corners=False)
        return torch.sigmoid(self.layers(f_phi)).squeeze(1)


def decode_silhouette(decoder: SilhouetteDecoder, f_phi: torch.Tensor) -> torch.Tensor:
    """(B, C, h, w) feature maps -> (B, 128, 128) silhouettes in (0, 1)"""
    return decoder(f_phi)
