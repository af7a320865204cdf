"""
Rotation utilities shared by the body model, the regressor and the losses.
All functions are batched over leading dimensions and differentiable unless noted.
"""

from typing import Union

import numpy as np
import torch
import torch.nn.functional as F
from scipy.spatial.transform import Rotation

Angle = Union[float, torch.Tensor]


def skew(vectors: torch.Tensor) -> torch.Tensor:
    """(..., 3) -> (..., 3, 3) cross-product matrices"""
    x, y, z = vectors.unbind(-1)
    zeros = torch.zeros_like(x)
    return torch.stack([
        torch.stack([zeros, -z, y], dim=-1),
        torch.stack([z, zeros, -x], dim=-1),
        torch.stack([-y, x, zeros], dim=-1),
    ], dim=-2)


def batch_rodrigues(rot_vecs: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Axis-angle (..., 3) to rotation matrices (..., 3, 3).

    Small angles use the second-order series so the zero vector maps to the
    identity exactly and gradients stay finite.
    """
    angle = torch.linalg.vector_norm(rot_vecs, dim=-1, keepdim=True)
    small = angle < eps
    safe_angle = torch.where(small, torch.ones_like(angle), angle)

    axis_skew = skew(rot_vecs / safe_angle)
    sin = torch.sin(safe_angle)[..., None]
    cos = torch.cos(safe_angle)[..., None]
    ident = torch.eye(3, dtype=rot_vecs.dtype, device=rot_vecs.device).expand(axis_skew.shape)

    rot_large = ident + sin * axis_skew + (1 - cos) * (axis_skew @ axis_skew)
    vec_skew = skew(rot_vecs)
    rot_small = ident + vec_skew + 0.5 * (vec_skew @ vec_skew)
    return torch.where(small[..., None], rot_small, rot_large)


def rodrigues(axis_angle: torch.Tensor) -> torch.Tensor:
    """Single 3-vector to a 3x3 rotation matrix"""
    return batch_rodrigues(torch.as_tensor(axis_angle).reshape(3))


def rotmat_to_axis_angle(rotmats: torch.Tensor) -> torch.Tensor:
    """Rotation matrices (..., 3, 3) to axis-angle (..., 3). Not differentiable"""
    flat = rotmats.detach().reshape(-1, 3, 3).cpu().double().numpy()
    rotvecs = Rotation.from_matrix(flat).as_rotvec()
    out = torch.from_numpy(rotvecs).to(dtype=rotmats.dtype, device=rotmats.device)
    return out.reshape(*rotmats.shape[:-2], 3)


def rot6d_to_rotmat(x: torch.Tensor) -> torch.Tensor:
    """Continuous 6D representation (..., 6) to rotation matrices (..., 3, 3).

    The 6 numbers are the first two columns of the matrix, laid out as a 3x2 block.
    """
    block = x.reshape(*x.shape[:-1], 3, 2)
    a1, a2 = block[..., 0], block[..., 1]
    b1 = F.normalize(a1, dim=-1)
    b2 = F.normalize(a2 - (b1 * a2).sum(-1, keepdim=True) * b1, dim=-1)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def rotmat_to_rot6d(rotmats: torch.Tensor) -> torch.Tensor:
    return rotmats[..., :2].reshape(*rotmats.shape[:-2], 6)


def rotation_y(angle: Angle, dtype: torch.dtype = None, device=None) -> torch.Tensor:
    """R_y(angle) for a scalar or a tensor of angles; shape (..., 3, 3)"""
    if isinstance(angle, torch.Tensor):
        angle = angle.to(dtype=dtype or angle.dtype, device=device or angle.device)
    else:
        angle = torch.tensor(angle, dtype=dtype or torch.get_default_dtype(), device=device)
    cos, sin = torch.cos(angle), torch.sin(angle)
    zeros, ones = torch.zeros_like(angle), torch.ones_like(angle)
    return torch.stack([
        torch.stack([cos, zeros, sin], dim=-1),
        torch.stack([zeros, ones, zeros], dim=-1),
        torch.stack([-sin, zeros, cos], dim=-1),
    ], dim=-2)


def rotate_about_vertical(points: torch.Tensor, angle: Angle) -> torch.Tensor:
    """Rotate points (..., N, 3) about the +y axis.

    A tensor angle of shape (B,) rotates a batch (B, N, 3) point set by point set.
    """
    rot = rotation_y(angle, dtype=points.dtype, device=points.device)
    if rot.dim() == 3:
        rot = rot[:, None]
    return (rot @ points[..., None]).squeeze(-1)


def rotate_global_orient_rotmat(rotmats: torch.Tensor, delta: Angle) -> torch.Tensor:
    """Move the viewer by delta: global block becomes R_y(-delta) @ R_glob.

    rotmats is (B, K, 3, 3); delta is a scalar or (B,). Other joints are untouched.
    """
    if not isinstance(delta, torch.Tensor):
        delta = torch.tensor(delta, dtype=rotmats.dtype, device=rotmats.device)
    rot = rotation_y(-delta, dtype=rotmats.dtype, device=rotmats.device)
    if rot.dim() == 3:
        rot = rot[:, None]
    else:
        rot = rot.expand(rotmats.shape[0], 1, 3, 3)
    glob = rot @ rotmats[:, :1]
    return torch.cat([glob, rotmats[:, 1:]], dim=1)


def rotate_global_orient(pose_theta: torch.Tensor, delta: Angle) -> torch.Tensor:
    """Axis-angle pose (..., K*3) with the global block re-expressed for a viewer moved by delta.

    rotate_global_orient(rotate_global_orient(theta, a), b) == rotate_global_orient(theta, a + b),
    so ground-truth seen from azimuth phi is rotate_global_orient(theta, phi).
    """
    pose_theta = torch.as_tensor(pose_theta)
    squeeze = pose_theta.dim() == 1
    pose = pose_theta[None] if squeeze else pose_theta

    glob = batch_rodrigues(pose[:, :3])[:, None]
    rotated = rotate_global_orient_rotmat(glob, delta)[:, 0]
    out = torch.cat([rotmat_to_axis_angle(rotated), pose[:, 3:]], dim=-1)
    return out[0] if squeeze else out


def random_rotation_vectors(n: int, rng: np.random.Generator, max_angle: float = np.pi) -> np.ndarray:
    """Uniform axes with angles uniform in [0, max_angle); used by tests and data generation"""
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return axes * rng.uniform(0.0, max_angle, size=(n, 1))
