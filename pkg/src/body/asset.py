"""
Body model asset container: template mesh, shape basis, skinning weights,
kinematic tree and joint regressor, stored as a versioned .npz archive.
"""

import hashlib
import logging
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from src.errors import AssetError

logger = logging.getLogger(__name__)

ASSET_FORMAT_VERSION = 2
WEIGHT_TOLERANCE = 1e-6
ROOT_TOLERANCE = 1e-9


@dataclass
class BodyModelAsset:
    template_vertices: np.ndarray   # V x 3, y-up model units
    shape_basis: np.ndarray         # B x V x 3
    skinning_weights: np.ndarray    # V x K
    parent_of: np.ndarray           # K, parent_of[0] == -1
    rest_joints: np.ndarray         # K x 3, root at the origin
    skeleton_regressor: np.ndarray  # K x V, moves the skeleton with the shape
    joint_regressor: np.ndarray     # N_j x V
    faces: np.ndarray               # F x 3 vertex indices
    joint_names: List[str] = field(default_factory=list)
    asset_id: str = 'toy'

    @property
    def num_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def num_betas(self) -> int:
        return self.shape_basis.shape[0]

    @property
    def num_joints(self) -> int:
        return self.parent_of.shape[0]

    @property
    def num_regressed_joints(self) -> int:
        return self.joint_regressor.shape[0]

    def validate(self) -> 'BodyModelAsset':
        """Check shapes and the asset invariants; raises AssetError"""
        V = self.template_vertices.shape[0]
        K = self.parent_of.shape[0]

        expectations = [
            (self.template_vertices.shape == (V, 3), 'template_vertices must be V x 3'),
            (self.shape_basis.ndim == 3 and self.shape_basis.shape[1:] == (V, 3),
             'shape_basis must be B x V x 3'),
            (self.skinning_weights.shape == (V, K), 'skinning_weights must be V x K'),
            (self.rest_joints.shape == (K, 3), 'rest_joints must be K x 3'),
            (self.skeleton_regressor.shape == (K, V), 'skeleton_regressor must be K x V'),
            (self.joint_regressor.ndim == 2 and self.joint_regressor.shape[1] == V,
             'joint_regressor must be N_j x V'),
            (self.faces.ndim == 2 and self.faces.shape[1] == 3, 'faces must be F x 3'),
        ]
        for ok, message in expectations:
            if not ok:
                raise AssetError(message)

        if self.num_betas < 1 or K < 2 or self.num_regressed_joints < 1:
            raise AssetError("asset needs B >= 1, K >= 2 and N_j >= 1")

        for name in ('template_vertices', 'shape_basis', 'skinning_weights', 'rest_joints',
                     'skeleton_regressor', 'joint_regressor'):
            if not np.all(np.isfinite(getattr(self, name))):
                raise AssetError(f"{name} contains non-finite values")

        if np.any(self.skinning_weights < 0):
            raise AssetError("skinning weights must be non-negative")
        if np.max(np.abs(self.skinning_weights.sum(axis=1) - 1.0)) > WEIGHT_TOLERANCE:
            raise AssetError("skinning weights of every vertex must sum to 1")
        if np.max(np.abs(self.skeleton_regressor.sum(axis=1) - 1.0)) > WEIGHT_TOLERANCE:
            raise AssetError("skeleton regressor rows must sum to 1")
        if np.max(np.abs(self.joint_regressor.sum(axis=1) - 1.0)) > WEIGHT_TOLERANCE:
            raise AssetError("joint regressor rows must sum to 1")
        # every view rotates the body about the origin
        if np.max(np.abs(self.rest_joints[0])) > ROOT_TOLERANCE:
            raise AssetError(f"root joint must rest at the origin, found {self.rest_joints[0].tolist()}")

        # single rooted tree, parents listed before children
        if self.parent_of[0] != -1:
            raise AssetError("joint 0 must be the root (parent -1)")
        for k in range(1, K):
            if not 0 <= self.parent_of[k] < k:
                raise AssetError(f"joint {k} has parent {self.parent_of[k]}; parents must precede children")

        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= V):
            raise AssetError("faces index outside the vertex range")
        return self

    def content_hash(self) -> str:
        """Stable hash of the numeric content, recorded in dataset headers"""
        digest = hashlib.sha256()
        for name in ('template_vertices', 'shape_basis', 'skinning_weights', 'parent_of',
                     'rest_joints', 'skeleton_regressor', 'joint_regressor', 'faces'):
            digest.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return digest.hexdigest()[:16]


def save_asset(asset: BodyModelAsset, path: Union[str, Path]) -> Path:
    """Write the asset as a self-describing .npz archive"""
    asset.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as handle:
        np.savez(
            handle,
            format_version=np.array(ASSET_FORMAT_VERSION),
            asset_id=np.array(asset.asset_id),
            template_vertices=asset.template_vertices.astype(np.float64),
            shape_basis=asset.shape_basis.astype(np.float64),
            skinning_weights=asset.skinning_weights.astype(np.float64),
            parent_of=asset.parent_of.astype(np.int64),
            rest_joints=asset.rest_joints.astype(np.float64),
            skeleton_regressor=asset.skeleton_regressor.astype(np.float64),
            joint_regressor=asset.joint_regressor.astype(np.float64),
            faces=asset.faces.astype(np.int64),
            joint_names=np.array(asset.joint_names),
        )
    logger.info(f"Saved body asset {asset.asset_id} ({asset.num_vertices} vertices) to {path}")
    return path


def load_asset(path: Union[str, Path]) -> BodyModelAsset:
    """Read and validate an asset written by save_asset"""
    path = Path(path)
    if not path.is_file():
        raise AssetError(f"Body asset not found: {path}")

    try:
        with np.load(path, allow_pickle=False) as archive:
            version = int(archive['format_version'])
            if version != ASSET_FORMAT_VERSION:
                raise AssetError(f"Unsupported asset format version {version} (expected {ASSET_FORMAT_VERSION})")
            asset = BodyModelAsset(
                template_vertices=archive['template_vertices'],
                shape_basis=archive['shape_basis'],
                skinning_weights=archive['skinning_weights'],
                parent_of=archive['parent_of'],
                rest_joints=archive['rest_joints'],
                skeleton_regressor=archive['skeleton_regressor'],
                joint_regressor=archive['joint_regressor'],
                faces=archive['faces'],
                joint_names=[str(name) for name in archive['joint_names']],
                asset_id=str(archive['asset_id']),
            )
    except KeyError as e:
        raise AssetError(f"Body asset {path} is missing field {e}")
    except (OSError, ValueError) as e:
        raise AssetError(f"Body asset {path} could not be read: {e}")

    return asset.validate()


def load_smpl_asset(path: Union[str, Path], num_betas: int = 10,
                    joint_regressor: Optional[np.ndarray] = None) -> BodyModelAsset:
    """Convert an SMPL-style model archive (.npz or .pkl) into a BodyModelAsset.

    Expects the usual keys: v_template, shapedirs (V x 3 x B), weights,
    kintree_table, J_regressor and f. Pose-dependent correctives are ignored.
    The template is translated so that the root joint rests at the origin.
    """
    path = Path(path)
    if not path.is_file():
        raise AssetError(f"SMPL-style model not found: {path}")

    if path.suffix == '.npz':
        with np.load(path, allow_pickle=True) as archive:
            data = {key: archive[key] for key in archive.files}
    else:
        with open(path, 'rb') as handle:
            data = pickle.load(handle, encoding='latin1')

    try:
        template = np.asarray(data['v_template'], dtype=np.float64)
        shapedirs = np.asarray(data['shapedirs'], dtype=np.float64)[:, :, :num_betas]
        weights = np.asarray(data['weights'], dtype=np.float64)
        kintree = np.asarray(data['kintree_table'], dtype=np.int64)
        j_reg = np.asarray(_dense(data['J_regressor']), dtype=np.float64)
        faces = np.asarray(data['f'], dtype=np.int64)
    except KeyError as e:
        raise AssetError(f"SMPL-style model {path} is missing {e}")

    parents = kintree[0].copy()
    parents[0] = -1
    rest_joints = j_reg @ template
    root = rest_joints[0].copy()
    logger.info(f"Recentring {path.name} on its root joint (offset {np.round(root, 4).tolist()})")
    asset = BodyModelAsset(
        template_vertices=template - root,
        shape_basis=np.transpose(shapedirs, (2, 0, 1)),
        skinning_weights=weights,
        parent_of=parents,
        rest_joints=rest_joints - root,
        skeleton_regressor=j_reg,
        joint_regressor=j_reg if joint_regressor is None else joint_regressor,
        faces=faces,
        joint_names=[f"joint_{k}" for k in range(len(parents))],
        asset_id=path.stem,
    )
    return asset.validate()


def _dense(matrix):
    return matrix.toarray() if hasattr(matrix, 'toarray') else matrix
