"""
Deterministic synthetic dataset: sampled body parameters rendered to small
flat-shaded images, labelled with 2D keypoints always and full 3D labels
for a configurable fraction of examples.
"""

import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import torch
from scipy.spatial.transform import Rotation
from tqdm import tqdm

from src.body.asset import BodyModelAsset
from src.body.body_model import BodyModel, BodyParams
from src.data.labels import LabeledExample
from src.data.records import DATASET_FORMAT_VERSION, read_header, read_records, write_records
from src.errors import ConfigError, DatasetError
from src.rendering.rasterizer import coverage_mask, ndc_to_pixels, shade_image

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val')
BETA_STD = 0.5
JOINT_LIMIT_DEG = 60.0
ROOT_YAW_LIMIT_DEG = 45.0
# posed vertices must stay inside this fraction of the 1.2 bounding sphere
MAX_VERTEX_RADIUS = 0.97 * 1.2
SCALE_RANGE = (0.7, 0.75)
TRANSLATION_LIMIT = 0.05
MAX_REJECTIONS = 100

# per-joint colours, RGB 0..255
PART_COLOURS = np.array([
    [200, 80, 60], [220, 120, 70], [230, 180, 140], [235, 190, 150],
    [70, 130, 200], [60, 160, 120], [120, 90, 170], [170, 150, 60],
], dtype=np.float64)


@dataclass(frozen=True)
class DatasetManifest:
    seed: int = 0
    n_train: int = 1600
    n_val: int = 400
    image_size: int = 64
    fraction_3d: float = 0.5
    val_fraction_3d: float = 1.0
    asset_id: str = 'toy-seed0'
    format_version: int = DATASET_FORMAT_VERSION

    def __post_init__(self):
        if self.n_train < 1 or self.n_val < 1:
            raise ConfigError("dataset counts must be >= 1")
        if not (0.0 <= self.fraction_3d <= 1.0 and 0.0 <= self.val_fraction_3d <= 1.0):
            raise ConfigError("fraction_3d must lie in [0, 1]")
        if self.image_size < 16:
            raise ConfigError("image_size must be >= 16")

    def count(self, split: str) -> int:
        return self.n_train if split == 'train' else self.n_val

    def fraction(self, split: str) -> float:
        return self.fraction_3d if split == 'train' else self.val_fraction_3d

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'DatasetManifest':
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"Unknown manifest keys: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'DatasetManifest':
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Manifest not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Manifest {path} is not valid JSON: {e}")


def sample_pose(num_joints: int, rng: np.random.Generator) -> np.ndarray:
    """Axis-angle pose: yaw-only root within +-45 deg, other joints +-60 deg per euler axis"""
    yaw = rng.uniform(-ROOT_YAW_LIMIT_DEG, ROOT_YAW_LIMIT_DEG)
    euler = rng.uniform(-JOINT_LIMIT_DEG, JOINT_LIMIT_DEG, size=(num_joints - 1, 3))
    root = Rotation.from_euler('y', yaw, degrees=True).as_rotvec()
    joints = Rotation.from_euler('xyz', euler, degrees=True).as_rotvec()
    return np.concatenate([root[None], joints]).reshape(-1)


def sample_camera(rng: np.random.Generator) -> np.ndarray:
    scale = rng.uniform(*SCALE_RANGE)
    tx, ty = rng.uniform(-TRANSLATION_LIMIT, TRANSLATION_LIMIT, size=2)
    return np.array([scale, tx, ty])


def textured_background(size: int, rng: np.random.Generator) -> np.ndarray:
    """Blocky low-frequency colour field plus pixel noise"""
    cells = max(size // 8, 1)
    coarse = rng.uniform(40, 200, size=(cells, cells, 3))
    block = int(np.ceil(size / cells))
    field = np.kron(coarse, np.ones((block, block, 1)))[:size, :size]
    return np.clip(field + rng.normal(0.0, 8.0, size=field.shape), 0, 255)


def face_colours(asset: BodyModelAsset) -> np.ndarray:
    part = asset.skinning_weights[asset.faces[:, 0]].argmax(axis=1)
    return PART_COLOURS[part % len(PART_COLOURS)]


def posed_mesh(body: BodyModel, pose: np.ndarray, betas: np.ndarray,
               camera: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    params = BodyParams(torch.as_tensor(pose, dtype=torch.float64),
                        torch.as_tensor(betas, dtype=torch.float64),
                        torch.as_tensor(camera, dtype=torch.float64))
    with torch.no_grad():
        out = body(params)
    return out.vertices.numpy(), out.joints3d.numpy(), out.keypoints2d.numpy()


def foreground_coverage(vertices: np.ndarray, faces: np.ndarray, camera_pi: np.ndarray, size: int) -> float:
    """Fraction of image pixels covered by the mesh under the weak-perspective camera"""
    s, tx, ty = camera_pi
    pixels = ndc_to_pixels(s * vertices[:, :2] + np.array([tx, ty]), size)
    return float(coverage_mask(pixels[faces], size).mean())


def sample_example(asset: BodyModelAsset, rng: np.random.Generator, image_size: int = 64,
                   fraction_3d: float = 1.0, body: Optional[BodyModel] = None) -> LabeledExample:
    """One labelled example drawn from rng; 3D labels attached with probability fraction_3d"""
    body = body or BodyModel(asset, dtype=torch.float64)
    for _ in range(MAX_REJECTIONS):
        betas = rng.normal(0.0, BETA_STD, size=asset.num_betas)
        pose = sample_pose(asset.num_joints, rng)
        camera = sample_camera(rng)
        vertices, joints, keypoints = posed_mesh(body, pose, betas, camera)
        if np.linalg.norm(vertices, axis=1).max() <= MAX_VERTEX_RADIUS:
            break
    else:
        raise DatasetError(f"no pose inside the bounding sphere after {MAX_REJECTIONS} draws")

    background = textured_background(image_size, rng)
    image = shade_image(vertices, asset.faces, camera, face_colours(asset), background)
    has_3d = bool(rng.random() < fraction_3d)
    example = LabeledExample(image=image, has_3d=True, keypoints2d=keypoints, camera_pi=camera,
                             joints3d=joints, pose_theta=pose, shape_beta=betas, vertices=vertices)
    return example if has_3d else example.without_3d()


def example_rngs(seed: int, split: str, count: int) -> List[np.random.Generator]:
    """Independent per-example streams, a pure function of (seed, split, index)"""
    root = np.random.SeedSequence([seed, SPLITS.index(split)])
    return [np.random.default_rng(child) for child in root.spawn(count)]


def generate(manifest: DatasetManifest, asset: BodyModelAsset, split: str = 'train',
             show_progress: bool = False) -> List[LabeledExample]:
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    body = BodyModel(asset, dtype=torch.float64)
    rngs = example_rngs(manifest.seed, split, manifest.count(split))
    return [sample_example(asset, rng, manifest.image_size, manifest.fraction(split), body)
            for rng in tqdm(rngs, desc=f'generate {split}', disable=not show_progress, leave=False)]


def dataset_path(out_dir: Union[str, Path], split: str) -> Path:
    return Path(out_dir) / f'{split}.hmrd'


def write_dataset(manifest: DatasetManifest, asset: BodyModelAsset, out_dir: Union[str, Path],
                  show_progress: bool = False) -> Dict[str, Path]:
    """Generate both splits and write them with the manifest; returns split -> file path"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = {'image_size': manifest.image_size, 'num_keypoints': asset.num_regressed_joints,
            'pose_dim': asset.num_joints * 3, 'num_betas': asset.num_betas,
            'num_vertices': asset.num_vertices}
    paths = {}
    for split in SPLITS:
        examples = generate(manifest, asset, split, show_progress)
        n_3d = sum(ex.has_3d for ex in examples)
        paths[split] = write_records(dataset_path(out_dir, split), examples, dims, {
            'split': split, 'manifest': manifest.to_dict(), 'asset_hash': asset.content_hash(),
            'n_3d': n_3d})
        logger.info(f"{split}: {len(examples)} examples, {n_3d} with 3D labels")
    (out_dir / 'manifest.json').write_text(json.dumps(manifest.to_dict(), indent=2))
    return paths


def read_dataset(path: Union[str, Path], asset: Optional[BodyModelAsset] = None) -> List[LabeledExample]:
    """Load one split file. With an asset, its content hash must match the header"""
    header, examples = read_records(path)
    if asset is not None and header.get('asset_hash') != asset.content_hash():
        raise DatasetError(f"{path} was generated with body asset {header.get('asset_hash')}, "
                           f"not {asset.content_hash()}")
    logger.info(f"Loaded {len(examples)} examples from {path}")
    return examples


def dataset_manifest(path: Union[str, Path]) -> DatasetManifest:
    header, _ = read_header(path)
    return DatasetManifest.from_dict(header['manifest'])
