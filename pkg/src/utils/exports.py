"""
Mesh and image files: Wavefront OBJ through trimesh, PNG through Pillow.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import trimesh
from PIL import Image

from src.errors import InvalidInputError

logger = logging.getLogger(__name__)


def export_mesh(vertices: np.ndarray, faces: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = trimesh.Trimesh(vertices=np.asarray(vertices, dtype=np.float64),
                           faces=np.asarray(faces, dtype=np.int64), process=False)
    mesh.export(str(path), file_type='obj')
    return path


def load_mesh(path: Union[str, Path]) -> trimesh.Trimesh:
    return trimesh.load(str(path), file_type='obj', process=False, force='mesh')


def save_mask(mask: np.ndarray, path: Union[str, Path]) -> Path:
    """[0, 1] float mask -> 8-bit grayscale PNG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.round(np.asarray(mask, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels).save(path)
    return path


def save_image(image: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)
    return path


def load_image(path: Union[str, Path], size: int) -> np.ndarray:
    """RGB uint8 S x S x 3, resized to the model's input size when needed"""
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"Image not found: {path}")
    with Image.open(path) as img:
        img = img.convert('RGB')
        if img.size != (size, size):
            logger.info(f"Resizing {path.name} from {img.size} to {size}x{size}")
            img = img.resize((size, size), Image.BILINEAR)
        return np.asarray(img, dtype=np.uint8).copy()
