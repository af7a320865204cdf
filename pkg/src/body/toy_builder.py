"""
Procedural humanoid used in place of a licensed body model.
Capsule-like limbs, 8 joints, 10 smooth orthonormal shape directions,
generated deterministically from a seed.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.body.asset import BodyModelAsset

logger = logging.getLogger(__name__)

JOINT_NAMES = ['root', 'spine', 'neck', 'head', 'left_shoulder', 'right_shoulder', 'left_hip', 'right_hip']
PARENTS = np.array([-1, 0, 1, 2, 1, 1, 0, 0])
REST_JOINTS = np.array([
    [0.0, 0.0, 0.0],
    [0.0, 0.1, 0.0],
    [0.0, 0.5, 0.0],
    [0.0, 0.6, 0.0],
    [0.18, 0.45, 0.0],
    [-0.18, 0.45, 0.0],
    [0.1, -0.1, 0.0],
    [-0.1, -0.1, 0.0],
])


@dataclass(frozen=True)
class LimbSpec:
    joint: int
    start: Tuple[float, float, float]
    end: Tuple[float, float, float]
    radius: float


LIMBS = [
    LimbSpec(0, (0.0, -0.12, 0.0), (0.0, 0.1, 0.0), 0.15),
    LimbSpec(1, (0.0, 0.1, 0.0), (0.0, 0.5, 0.0), 0.14),
    LimbSpec(2, (0.0, 0.5, 0.0), (0.0, 0.6, 0.0), 0.05),
    LimbSpec(3, (0.0, 0.6, 0.0), (0.0, 0.84, 0.0), 0.1),
    LimbSpec(4, (0.18, 0.45, 0.0), (0.74, 0.45, 0.0), 0.05),
    LimbSpec(5, (-0.18, 0.45, 0.0), (-0.74, 0.45, 0.0), 0.05),
    LimbSpec(6, (0.1, -0.1, 0.0), (0.1, -0.84, 0.0), 0.07),
    LimbSpec(7, (-0.1, -0.1, 0.0), (-0.1, -0.84, 0.0), 0.07),
]

NUM_BETAS = 10
RINGS = 4
SEGMENTS = 6
# fraction of a limb, measured from its proximal end, that blends with the parent joint
BLEND_SPAN = 0.3
SHAPE_SCALE = 1.0


def build_toy_asset(seed: int = 0, num_betas: int = NUM_BETAS) -> BodyModelAsset:
    """Deterministic toy body: same seed, same bytes"""
    rng = np.random.default_rng(seed)

    vertices, faces, weights, limb_of_vertex = [], [], [], []
    for limb_index, limb in enumerate(LIMBS):
        offset = sum(len(v) for v in vertices)
        limb_vertices, limb_faces, limb_weights = _build_limb(limb)
        vertices.append(limb_vertices)
        faces.append(limb_faces + offset)
        weights.append(limb_weights)
        limb_of_vertex.extend([limb_index] * len(limb_vertices))

    template = np.concatenate(vertices)
    faces = np.concatenate(faces).astype(np.int64)
    skinning = np.concatenate(weights)
    regressor = _nearest_vertex_regressor(template, REST_JOINTS, neighbours=6)

    asset = BodyModelAsset(
        template_vertices=template,
        shape_basis=_smooth_shape_basis(template, num_betas, rng),
        skinning_weights=skinning,
        parent_of=PARENTS.copy(),
        rest_joints=REST_JOINTS.copy(),
        skeleton_regressor=regressor,
        joint_regressor=regressor.copy(),
        faces=faces,
        joint_names=list(JOINT_NAMES),
        asset_id=f'toy-seed{seed}',
    )
    logger.info(f"Built toy body: {asset.num_vertices} vertices, {len(faces)} faces, "
                f"{asset.num_joints} joints, {num_betas} shape directions")
    return asset.validate()


def _build_limb(limb: LimbSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    start, end = np.asarray(limb.start), np.asarray(limb.end)
    axis = end - start
    length = np.linalg.norm(axis)
    axis = axis / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)

    angles = 2 * np.pi * np.arange(SEGMENTS) / SEGMENTS
    ring_params = np.linspace(0.0, 1.0, RINGS)
    verts, params = [], []
    for t in ring_params:
        centre = start + t * length * axis
        for a in angles:
            verts.append(centre + limb.radius * (np.cos(a) * u + np.sin(a) * v))
            params.append(t)
    # end caps pushed out by half a radius so limbs look rounded
    verts.append(start - 0.5 * limb.radius * axis)
    params.append(0.0)
    verts.append(end + 0.5 * limb.radius * axis)
    params.append(1.0)

    faces = []
    for r in range(RINGS - 1):
        for s in range(SEGMENTS):
            a = r * SEGMENTS + s
            b = r * SEGMENTS + (s + 1) % SEGMENTS
            c = a + SEGMENTS
            d = b + SEGMENTS
            faces.extend([[a, b, d], [a, d, c]])
    bottom, top = RINGS * SEGMENTS, RINGS * SEGMENTS + 1
    last = (RINGS - 1) * SEGMENTS
    for s in range(SEGMENTS):
        faces.append([bottom, (s + 1) % SEGMENTS, s])
        faces.append([top, last + s, last + (s + 1) % SEGMENTS])

    weights = np.zeros((len(verts), len(PARENTS)))
    parent = PARENTS[limb.joint]
    for i, t in enumerate(params):
        if parent >= 0 and t < BLEND_SPAN:
            w_parent = 0.5 * (1.0 - t / BLEND_SPAN)
            weights[i, parent] = w_parent
            weights[i, limb.joint] = 1.0 - w_parent
        else:
            weights[i, limb.joint] = 1.0
    return np.asarray(verts), np.asarray(faces), weights


def _smooth_shape_basis(template: np.ndarray, num_betas: int, rng: np.random.Generator) -> np.ndarray:
    """Low-order polynomial displacement fields, orthonormalised over all V*3 entries"""
    x, y, z = template.T
    features = np.stack([x, y, z, x * x, y * y, z * z, x * y, y * z, x * z,
                         np.abs(x), np.abs(x) * y, np.ones_like(x)], axis=1)
    columns = []
    for _ in range(num_betas):
        mixing = rng.normal(size=(features.shape[1], 3))
        columns.append((features @ mixing).reshape(-1))
    q, _ = np.linalg.qr(np.stack(columns, axis=1))
    scale = SHAPE_SCALE * np.sqrt(len(template)) * 0.05
    return (q.T * scale).reshape(num_betas, len(template), 3)


def _nearest_vertex_regressor(template: np.ndarray, joints: np.ndarray, neighbours: int) -> np.ndarray:
    regressor = np.zeros((len(joints), len(template)))
    for k, joint in enumerate(joints):
        nearest = np.argsort(np.linalg.norm(template - joint, axis=1), kind='stable')[:neighbours]
        regressor[k, nearest] = 1.0 / neighbours
    return regressor
