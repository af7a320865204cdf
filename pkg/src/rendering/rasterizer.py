"""
Numpy triangle rasterizer.

Hard-coverage silhouettes of posed meshes (ground truth for the geometric
guidance branch) and flat-shaded z-buffered images for the synthetic dataset.
Pixel row 0 is the top of the frame; normalised coordinates run over [-1, 1]
with +y up.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch

from src.body.asset import BodyModelAsset
from src.body.body_model import BodyModel, BodyParams
from src.rendering.camera_rays import OrbitCamera, ViewingDirection
from src.errors import InvalidInputError

logger = logging.getLogger(__name__)

SILHOUETTE_RES = 128
# body bounding sphere maps to this fraction of the half-frame
FRAMING = 0.9
AREA_EPS = 1e-12


@dataclass
class Silhouette:
    mask: np.ndarray  # res x res, values in [0, 1]
    phi: ViewingDirection

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.mask * 255.0), 0, 255).astype(np.uint8)


def ndc_to_pixels(xy: np.ndarray, res: int) -> np.ndarray:
    """Normalised [-1, 1] coordinates to continuous pixel coordinates (column, row)"""
    xy = np.asarray(xy, dtype=np.float64)
    px = (xy[..., 0] + 1.0) * 0.5 * res
    py = (1.0 - xy[..., 1]) * 0.5 * res
    return np.stack([px, py], axis=-1)


def _edge(a: np.ndarray, b: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    return (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])


def _triangle_pixels(tri: np.ndarray, res: int):
    """Pixel centres inside one triangle given in pixel coordinates.

    Returns (rows, cols, barycentric weights) or None for a degenerate or
    off-frame triangle. Both windings are accepted.
    """
    a, b, c = tri
    area = _edge(a, b, c[0], c[1])
    if abs(area) < AREA_EPS:
        return None

    lo = np.floor(tri.min(axis=0) - 0.5).astype(int)
    hi = np.ceil(tri.max(axis=0) - 0.5).astype(int)
    c0, r0 = max(lo[0], 0), max(lo[1], 0)
    c1, r1 = min(hi[0], res - 1), min(hi[1], res - 1)
    if c0 > c1 or r0 > r1:
        return None

    cols = np.arange(c0, c1 + 1)
    rows = np.arange(r0, r1 + 1)
    px, py = np.meshgrid(cols + 0.5, rows + 0.5)
    w0 = _edge(b, c, px, py) / area
    w1 = _edge(c, a, px, py) / area
    w2 = _edge(a, b, px, py) / area
    inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    if not inside.any():
        return None
    rr, cc = np.nonzero(inside)
    weights = np.stack([w0[inside], w1[inside], w2[inside]], axis=-1)
    return rows[rr], cols[cc], weights


def coverage_mask(triangles_px: np.ndarray, res: int) -> np.ndarray:
    """Binary coverage of F x 3 x 2 pixel-space triangles, tested at pixel centres"""
    mask = np.zeros((res, res), dtype=bool)
    for tri in np.asarray(triangles_px, dtype=np.float64).reshape(-1, 3, 2):
        hit = _triangle_pixels(tri, res)
        if hit is not None:
            mask[hit[0], hit[1]] = True
    return mask


def rasterize_faces(vertices_px: np.ndarray, depth: np.ndarray, faces: np.ndarray,
                    res: int) -> Tuple[np.ndarray, np.ndarray]:
    """Z-buffer: per pixel the nearest face index (-1 for background) and its depth.

    depth grows toward the viewer, so the largest value wins.
    """
    zbuffer = np.full((res, res), -np.inf)
    face_ids = np.full((res, res), -1, dtype=np.int64)
    for f, face in enumerate(faces):
        hit = _triangle_pixels(vertices_px[face], res)
        if hit is None:
            continue
        rows, cols, weights = hit
        z = weights @ depth[face]
        closer = z > zbuffer[rows, cols]
        zbuffer[rows[closer], cols[closer]] = z[closer]
        face_ids[rows[closer], cols[closer]] = f
    return face_ids, zbuffer


def framed_xy(vertices: np.ndarray, camera: OrbitCamera = OrbitCamera()) -> np.ndarray:
    """Orthographic framing shared by every viewing direction"""
    return vertices[..., :2] / camera.bound_radius * FRAMING


def silhouette_from_vertices(vertices: np.ndarray, faces: np.ndarray, phi: float = 0.0,
                             res: int = SILHOUETTE_RES,
                             camera: OrbitCamera = OrbitCamera()) -> np.ndarray:
    """Binary float mask of a mesh seen from azimuth phi (vertices rotated by R_y(-phi))"""
    vertices = np.asarray(vertices, dtype=np.float64)
    if len(vertices) == 0 or len(faces) == 0:
        return np.zeros((res, res))
    if phi != 0.0:
        c, s = np.cos(-phi), np.sin(-phi)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        vertices = vertices @ rot.T
    pixels = ndc_to_pixels(framed_xy(vertices, camera), res)
    return coverage_mask(pixels[faces], res).astype(np.float64)


def rasterize_gt_silhouette(asset: BodyModelAsset, params_gt: BodyParams, phi=0.0,
                            res: int = SILHOUETTE_RES, body: Optional[BodyModel] = None) -> Silhouette:
    """Ground-truth silhouette of the posed body seen from azimuth phi"""
    direction = phi if isinstance(phi, ViewingDirection) else ViewingDirection(float(phi))
    body = body or BodyModel(asset, dtype=torch.float64)
    with torch.no_grad():
        vertices = body(params_gt).vertices.detach().cpu().double().numpy()
    if vertices.ndim == 3:
        if vertices.shape[0] != 1:
            raise InvalidInputError("rasterize_gt_silhouette takes one example at a time")
        vertices = vertices[0]
    mask = silhouette_from_vertices(vertices, asset.faces, direction.azimuth_phi, res)
    return Silhouette(mask=mask, phi=direction)


def shade_image(vertices: np.ndarray, faces: np.ndarray, camera_pi: np.ndarray,
                face_colors: np.ndarray, background: np.ndarray,
                light: Tuple[float, float, float] = (0.3, 0.5, 1.0)) -> np.ndarray:
    """Flat-shaded render of a mesh over a background, uint8 HxWx3.

    Vertices are projected with the weak-perspective camera so pixel
    positions agree with the keypoint labels.
    """
    size = background.shape[0]
    s, tx, ty = camera_pi
    ndc = s * vertices[:, :2] + np.array([tx, ty])
    pixels = ndc_to_pixels(ndc, size)
    face_ids, zbuffer = rasterize_faces(pixels, vertices[:, 2], faces, size)

    tri = vertices[faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), AREA_EPS)
    light = np.asarray(light) / np.linalg.norm(light)
    lambert = 0.35 + 0.65 * np.abs(normals @ light)

    image = background.astype(np.float64).copy()
    covered = face_ids >= 0
    if covered.any():
        ids = face_ids[covered]
        depth = zbuffer[covered]
        # nearer surfaces slightly brighter
        fog = 0.85 + 0.15 * np.clip((depth + 1.2) / 2.4, 0.0, 1.0)
        image[covered] = face_colors[ids] * (lambert[ids] * fog)[:, None]
    return np.clip(np.round(image), 0, 255).astype(np.uint8)
