"""
Labelled training examples and their batched torch form.
"""

from dataclasses import dataclass, fields
from typing import List, Optional, Sequence

import numpy as np
import torch

from src.errors import InvalidInputError, ShapeMismatchError

LABELS_3D = ('joints3d', 'pose_theta', 'shape_beta', 'vertices')


@dataclass(eq=False)
class LabeledExample:
    """One image with its labels. The 3D fields are present iff has_3d"""
    image: np.ndarray                        # S x S x 3 uint8
    has_3d: bool
    keypoints2d: np.ndarray                  # N_j x 2
    camera_pi: np.ndarray                    # (s, tx, ty) used to render the image
    joints3d: Optional[np.ndarray] = None    # N_j x 3
    pose_theta: Optional[np.ndarray] = None  # K*3 axis-angle
    shape_beta: Optional[np.ndarray] = None  # B
    vertices: Optional[np.ndarray] = None    # V x 3, silhouette ground truth and PVE

    def validate(self) -> 'LabeledExample':
        if self.image.ndim != 3 or self.image.shape[2] != 3 or self.image.shape[0] != self.image.shape[1]:
            raise ShapeMismatchError(f"image must be S x S x 3, got {self.image.shape}")
        if self.keypoints2d.ndim != 2 or self.keypoints2d.shape[1] != 2:
            raise ShapeMismatchError("keypoints2d must be N_j x 2")
        present = [getattr(self, name) is not None for name in LABELS_3D]
        if self.has_3d and not all(present):
            raise InvalidInputError("has_3d example is missing 3D labels")
        if not self.has_3d and any(present):
            raise InvalidInputError("2D-only example carries 3D labels")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray) and value.dtype.kind == 'f' and not np.all(np.isfinite(value)):
                raise InvalidInputError(f"{f.name} contains non-finite values")
        return self

    def equals(self, other: 'LabeledExample') -> bool:
        """Field-by-field exact comparison"""
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or a.shape != b.shape or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    def without_3d(self) -> 'LabeledExample':
        return LabeledExample(self.image, False, self.keypoints2d, self.camera_pi)


@dataclass
class LabeledBatch:
    """Stacked examples. Missing 3D labels are zero-filled and masked by has_3d"""
    images: torch.Tensor       # (B, S, S, 3) in [0, 1]
    has_3d: torch.Tensor       # (B,) bool
    keypoints2d: torch.Tensor  # (B, N_j, 2)
    joints3d: torch.Tensor     # (B, N_j, 3)
    pose_theta: torch.Tensor   # (B, K*3)
    shape_beta: torch.Tensor   # (B, num_betas)
    vertices: torch.Tensor     # (B, V, 3)

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, index: torch.Tensor) -> 'LabeledBatch':
        return LabeledBatch(*(getattr(self, f.name)[index] for f in fields(self)))


def collate(examples: Sequence[LabeledExample], num_joints: int, num_betas: int, num_vertices: int,
            dtype: torch.dtype = torch.float32) -> LabeledBatch:
    """Stack examples into tensors; absent 3D labels become zeros"""
    if not examples:
        raise InvalidInputError("cannot collate an empty batch")

    def stack(name: str, shape) -> torch.Tensor:
        rows: List[np.ndarray] = []
        for ex in examples:
            value = getattr(ex, name)
            rows.append(np.zeros(shape) if value is None else np.asarray(value, dtype=np.float64).reshape(shape))
        return torch.as_tensor(np.stack(rows), dtype=dtype)

    n_kp = examples[0].keypoints2d.shape[0]
    images = torch.as_tensor(np.stack([ex.image for ex in examples]), dtype=dtype) / 255.0
    return LabeledBatch(
        images=images,
        has_3d=torch.tensor([bool(ex.has_3d) for ex in examples]),
        keypoints2d=stack('keypoints2d', (n_kp, 2)),
        joints3d=stack('joints3d', (n_kp, 3)),
        pose_theta=stack('pose_theta', (num_joints * 3,)),
        shape_beta=stack('shape_beta', (num_betas,)),
        vertices=stack('vertices', (num_vertices, 3)),
    )
