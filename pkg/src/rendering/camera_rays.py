"""
Zero-elevation orbit camera: ray generation per feature-map cell,
depth sampling along rays, and sinusoidal positional encoding.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import torch

from src.body.rotations import rotation_y
from src.errors import InvalidInputError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ViewingDirection:
    """Azimuth on the horizontal orbit; elevation is always zero"""
    azimuth_phi: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.azimuth_phi):
            raise InvalidInputError("azimuth must be finite")
        object.__setattr__(self, 'azimuth_phi', self.azimuth_phi % TWO_PI)

    @classmethod
    def from_degrees(cls, degrees: float) -> 'ViewingDirection':
        return cls(math.radians(degrees))

    @property
    def is_canonical(self) -> bool:
        return self.azimuth_phi == 0.0


CANONICAL = ViewingDirection(0.0)


@dataclass(frozen=True)
class OrbitCamera:
    """Scene bounds shared by ray generation, sampling and silhouette framing"""
    orbit_radius: float = 2.5
    near: float = 1.3
    far: float = 3.7
    bound_radius: float = 1.2

    @property
    def tan_half_angle(self) -> float:
        return self.bound_radius / self.orbit_radius

    @classmethod
    def from_config(cls, config) -> 'OrbitCamera':
        return cls(config.orbit_radius, config.near, config.far, config.bound_radius)


@dataclass
class RayBundle:
    origins: torch.Tensor     # (..., H, W, 3)
    directions: torch.Tensor  # (..., H, W, 3), unit length
    near: float
    far: float


@dataclass
class SamplePoints:
    positions: torch.Tensor  # (..., H, W, N_s, 3)
    depths: torch.Tensor     # (..., H, W, N_s)
    deltas: torch.Tensor     # (..., H, W, N_s)


PhiLike = Union[float, ViewingDirection, torch.Tensor]


def _as_angle_tensor(phi: PhiLike, dtype: Optional[torch.dtype]) -> torch.Tensor:
    if isinstance(phi, ViewingDirection):
        phi = phi.azimuth_phi
    if isinstance(phi, torch.Tensor):
        return phi.to(dtype=dtype or phi.dtype)
    return torch.tensor(float(phi), dtype=dtype or torch.get_default_dtype())


def camera_position(phi: PhiLike, camera: OrbitCamera = OrbitCamera(),
                    dtype: Optional[torch.dtype] = None) -> torch.Tensor:
    """(..., 3) camera centre on the y=0 circle; phi=0 sits on +z"""
    angle = _as_angle_tensor(phi, dtype)
    return camera.orbit_radius * torch.stack(
        [torch.sin(angle), torch.zeros_like(angle), torch.cos(angle)], dim=-1)


def make_rays(phi: PhiLike, h: int, w: int, camera: OrbitCamera = OrbitCamera(),
              dtype: Optional[torch.dtype] = None) -> RayBundle:
    """One ray through each cell centre of an h x w grid, camera looking at the origin.

    phi may be a scalar or a (B,) tensor; outputs gain the same leading shape.
    """
    if h < 1 or w < 1:
        raise InvalidInputError("ray grid needs h, w >= 1")
    angle = _as_angle_tensor(phi, dtype)
    dtype = angle.dtype

    # row 0 is the top of the image (+y), column 0 the left (-x)
    u = (2.0 * (torch.arange(w, dtype=dtype, device=angle.device) + 0.5) / w - 1.0) * camera.tan_half_angle
    v = (1.0 - 2.0 * (torch.arange(h, dtype=dtype, device=angle.device) + 0.5) / h) * camera.tan_half_angle
    vv, uu = torch.meshgrid(v, u, indexing='ij')
    local = torch.stack([uu, vv, -torch.ones_like(uu)], dim=-1)
    local = local / torch.linalg.vector_norm(local, dim=-1, keepdim=True)

    rot = rotation_y(angle, dtype=dtype, device=angle.device)
    lead = angle.shape
    rot = rot.reshape(*lead, 1, 1, 3, 3)
    directions = (rot @ local[..., None]).squeeze(-1)
    origins = camera_position(angle, camera).reshape(*lead, 1, 1, 3).expand_as(directions)
    return RayBundle(origins=origins, directions=directions, near=camera.near, far=camera.far)


def sample_along(rays: RayBundle, n_s: int, stratified: bool = False,
                 generator: Optional[torch.Generator] = None) -> SamplePoints:
    """n_s depths in [near, far].

    Deterministic sampling uses linspace(near, far, n_s); stratified sampling
    draws one uniform depth inside each of n_s equal bins. The last delta is
    the bin width (far - near) / n_s.
    """
    if n_s < 2:
        raise InvalidInputError("need at least two samples per ray")
    dtype = rays.directions.dtype
    device = rays.directions.device
    ray_shape = rays.directions.shape[:-1]
    span = rays.far - rays.near
    bin_width = span / n_s

    if stratified:
        offsets = torch.rand(*ray_shape, n_s, generator=generator, dtype=dtype, device=device)
        depths = rays.near + (torch.arange(n_s, dtype=dtype, device=device) + offsets) * bin_width
    else:
        depths = torch.linspace(rays.near, rays.far, n_s, dtype=dtype, device=device).expand(*ray_shape, n_s)

    positions = rays.origins[..., None, :] + depths[..., None] * rays.directions[..., None, :]
    steps = torch.linalg.vector_norm(positions[..., 1:, :] - positions[..., :-1, :], dim=-1)
    last = torch.full((*ray_shape, 1), bin_width, dtype=dtype, device=device)
    deltas = torch.cat([steps, last], dim=-1)
    return SamplePoints(positions=positions, depths=depths, deltas=deltas)


def positional_encode(value: torch.Tensor, octaves: int) -> torch.Tensor:
    """(sin(2^0 v pi), cos(2^0 v pi), ..., sin(2^L v pi), cos(2^L v pi)) per scalar.

    (...,) -> (..., 2(L+1)); frequencies run 2^0 .. 2^L inclusive.
    """
    value = torch.as_tensor(value)
    if not torch.is_floating_point(value):
        value = value.to(torch.get_default_dtype())
    freqs = math.pi * 2.0 ** torch.arange(octaves + 1, dtype=value.dtype, device=value.device)
    angles = value[..., None] * freqs
    return torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1).flatten(-2)


def encode_vector(points: torch.Tensor, octaves: int) -> torch.Tensor:
    """Apply positional_encode to every coordinate: (..., 3) -> (..., 6(L+1))"""
    return positional_encode(points, octaves).flatten(-2)


def encoded_width(octaves: int, dims: int = 3) -> int:
    return dims * 2 * (octaves + 1)
