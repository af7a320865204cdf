"""
Articulated body: shape/pose -> mesh vertices, regressed 3D joints and
weak-perspective 2D keypoints, via linear blend skinning over the kinematic tree.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.body.asset import BodyModelAsset
from src.body.rotations import batch_rodrigues
from src.errors import InvalidInputError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class BodyParams:
    """Pose (axis-angle per joint, global first), shape coefficients, camera (s, tx, ty).

    Tensors may carry a leading batch dimension.
    """
    pose_theta: torch.Tensor
    shape_beta: torch.Tensor
    camera_pi: torch.Tensor

    @classmethod
    def rest(cls, num_joints: int, num_betas: int, batch_size: Optional[int] = None,
             dtype: torch.dtype = torch.float32) -> 'BodyParams':
        lead = () if batch_size is None else (batch_size,)
        camera = torch.zeros(*lead, 3, dtype=dtype)
        camera[..., 0] = 1.0
        return cls(torch.zeros(*lead, num_joints * 3, dtype=dtype),
                   torch.zeros(*lead, num_betas, dtype=dtype), camera)

    def batched(self) -> 'BodyParams':
        if self.pose_theta.dim() == 1:
            return BodyParams(self.pose_theta[None], self.shape_beta[None], self.camera_pi[None])
        return self

    def validate(self, num_joints: int, num_betas: int) -> 'BodyParams':
        if self.pose_theta.shape[-1] != num_joints * 3:
            raise ShapeMismatchError(f"pose_theta has {self.pose_theta.shape[-1]} entries, expected {num_joints * 3}")
        if self.shape_beta.shape[-1] != num_betas:
            raise ShapeMismatchError(f"shape_beta has {self.shape_beta.shape[-1]} entries, expected {num_betas}")
        if self.camera_pi.shape[-1] != 3:
            raise ShapeMismatchError("camera_pi must be (s, tx, ty)")
        for name in ('pose_theta', 'shape_beta', 'camera_pi'):
            if not torch.isfinite(getattr(self, name)).all():
                raise InvalidInputError(f"{name} contains non-finite values")
        if (self.camera_pi[..., 0] <= 0).any():
            raise InvalidInputError("camera scale s must be positive")
        return self


@dataclass
class MeshAndJoints:
    vertices: torch.Tensor     # (..., V, 3)
    joints3d: torch.Tensor     # (..., N_j, 3)
    keypoints2d: torch.Tensor  # (..., N_j, 2), normalised image coordinates


def weak_perspective(points3d: torch.Tensor, camera_pi: torch.Tensor) -> torch.Tensor:
    """s * (x, y) + (tx, ty); no checks, used on the training path"""
    scale = camera_pi[..., None, :1]
    trans = camera_pi[..., None, 1:]
    return scale * points3d[..., :2] + trans


def project(points3d: torch.Tensor, camera_pi: torch.Tensor) -> torch.Tensor:
    """Weak-perspective projection of N x 3 points; z is discarded"""
    camera_pi = torch.as_tensor(camera_pi, dtype=points3d.dtype)
    if points3d.shape[-1] != 3:
        raise ShapeMismatchError("points3d must end in a 3-vector")
    if (camera_pi[..., 0] <= 0).any():
        raise InvalidInputError("camera scale s must be positive")
    return weak_perspective(points3d, camera_pi)


def transform_mat(rot: torch.Tensor, trans: torch.Tensor) -> torch.Tensor:
    """(..., 3, 3) and (..., 3, 1) -> (..., 4, 4) rigid transforms"""
    return torch.cat([F.pad(rot, [0, 0, 0, 1]), F.pad(trans, [0, 0, 0, 1], value=1.0)], dim=-1)


def batch_rigid_transform(rotmats: torch.Tensor, joints: torch.Tensor,
                          parents: np.ndarray) -> Tuple[torch.Tensor, torch.Tensor]:
    """Chain per-joint rotations down the tree.

    Returns posed joint locations (B, K, 3) and the per-joint transforms
    (B, K, 4, 4) that map rest-pose points to posed points.
    """
    joints = joints[..., None]
    rel_joints = joints.clone()
    parent_index = torch.as_tensor(parents[1:], dtype=torch.long, device=joints.device)
    rel_joints[:, 1:] = joints[:, 1:] - joints[:, parent_index]

    local = transform_mat(rotmats, rel_joints)
    chain = [local[:, 0]]
    for k in range(1, len(parents)):
        chain.append(chain[parents[k]] @ local[:, k])
    world = torch.stack(chain, dim=1)

    posed_joints = world[:, :, :3, 3]
    joints_homogen = F.pad(joints, [0, 0, 0, 1])
    rel_transforms = world - F.pad(world @ joints_homogen, [3, 0, 0, 0, 0, 0, 0, 0])
    return posed_joints, rel_transforms


class BodyModel(nn.Module):
    """Torch wrapper of a BodyModelAsset. Buffers only; nothing here is learned"""

    def __init__(self, asset: BodyModelAsset, dtype: torch.dtype = torch.float32):
        super().__init__()
        asset.validate()
        self.asset = asset
        self.parents = asset.parent_of.copy()
        self.register_buffer('template', torch.as_tensor(asset.template_vertices, dtype=dtype))
        self.register_buffer('shape_basis', torch.as_tensor(asset.shape_basis, dtype=dtype))
        self.register_buffer('skinning_weights', torch.as_tensor(asset.skinning_weights, dtype=dtype))
        self.register_buffer('rest_joints', torch.as_tensor(asset.rest_joints, dtype=dtype))
        self.register_buffer('joint_shape_basis', torch.as_tensor(
            np.einsum('kv,lvc->lkc', asset.skeleton_regressor, asset.shape_basis), dtype=dtype))
        self.register_buffer('joint_regressor', torch.as_tensor(asset.joint_regressor, dtype=dtype))

    @property
    def faces(self) -> np.ndarray:
        return self.asset.faces

    @property
    def num_joints(self) -> int:
        return self.asset.num_joints

    @property
    def num_betas(self) -> int:
        return self.asset.num_betas

    def shaped_template(self, betas: torch.Tensor) -> torch.Tensor:
        return self.template + torch.einsum('bl,lvc->bvc', betas, self.shape_basis)

    def shaped_joints(self, betas: torch.Tensor) -> torch.Tensor:
        """Skeleton (B, K, 3) of the shaped template, before the root is moved back to the origin"""
        return self.rest_joints + torch.einsum('bl,lkc->bkc', betas, self.joint_shape_basis)

    def regress_joints(self, vertices: torch.Tensor) -> torch.Tensor:
        return torch.einsum('jv,...vc->...jc', self.joint_regressor, vertices)

    def forward_rotmats(self, rotmats: torch.Tensor, betas: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Posed vertices (B, V, 3) and regressed joints (B, N_j, 3) from (B, K, 3, 3) rotations.

        The skeleton follows the shape and the root stays at the origin, so a global
        rotation turns the whole body about the origin.
        """
        joints = self.shaped_joints(betas)
        root = joints[:, :1]
        v_shaped = self.shaped_template(betas) - root
        _, transforms = batch_rigid_transform(rotmats, joints - root, self.parents)

        blended = torch.einsum('vk,bkij->bvij', self.skinning_weights, transforms)
        v_homo = F.pad(v_shaped, [0, 1], value=1.0)
        vertices = (blended @ v_homo[..., None])[..., :3, 0]
        return vertices, self.regress_joints(vertices)

    def forward(self, params: BodyParams) -> MeshAndJoints:
        params.validate(self.num_joints, self.num_betas)
        unbatched = params.pose_theta.dim() == 1
        params = params.batched()

        pose = params.pose_theta.to(self.template.dtype)
        rotmats = batch_rodrigues(pose.reshape(pose.shape[0], self.num_joints, 3))
        vertices, joints = self.forward_rotmats(rotmats, params.shape_beta.to(self.template.dtype))
        keypoints = weak_perspective(joints, params.camera_pi.to(self.template.dtype))

        if unbatched:
            return MeshAndJoints(vertices[0], joints[0], keypoints[0])
        return MeshAndJoints(vertices, joints, keypoints)


def forward(asset: BodyModelAsset, params: BodyParams) -> MeshAndJoints:
    """One-shot M(theta, beta), J = W M, K = Pi(J) in the dtype of the pose tensor"""
    return BodyModel(asset, dtype=params.pose_theta.dtype)(params)
