"""
Feature fields module: image encoder, foreground attention, the
latent-conditioned field network, volume rendering of a feature map for a
viewing direction, and aggregation of that map into one view feature.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.config import AGGREGATION_MODES
from src.errors import ConfigError, ShapeMismatchError
from src.rendering.camera_rays import (OrbitCamera, PhiLike, ViewingDirection, encode_vector,
                                       encoded_width, make_rays, sample_along)

logger = logging.getLogger(__name__)

GRID_SIZE = 7


def images_to_tensor(images: torch.Tensor, image_size: int) -> torch.Tensor:
    """(S,S,3) or (B,S,S,3) channel-last images in [0,1] -> (B,3,S,S)"""
    images = torch.as_tensor(images)
    if images.dtype == torch.uint8:
        images = images.to(torch.get_default_dtype()) / 255.0
    if images.dim() == 3:
        images = images[None]
    if images.dim() != 4 or images.shape[1:] != (image_size, image_size, 3):
        raise ShapeMismatchError(
            f"expected images of shape (B, {image_size}, {image_size}, 3), got {tuple(images.shape)}")
    return images.permute(0, 3, 1, 2)


class ImageEncoder(nn.Module):
    """Small convolutional backbone producing a C x 7 x 7 grid feature"""

    def __init__(self, channels: int = 128, image_size: int = 64):
        super().__init__()
        self.image_size = image_size
        widths = [max(channels // 8, 4), max(channels // 4, 4), max(channels // 2, 4), channels]
        strides = (1, 2, 2, 2)
        blocks, in_ch = [], 3
        for width, stride in zip(widths, strides):
            blocks += [nn.Conv2d(in_ch, width, 3, stride=stride, padding=1, bias=False),
                       nn.BatchNorm2d(width), nn.ReLU(inplace=True)]
            in_ch = width
        # 8x8 -> 7x7 for the default 64 pixel input
        blocks += [nn.Conv2d(channels, channels, 2), nn.ReLU(inplace=True),
                   nn.AdaptiveAvgPool2d(GRID_SIZE)]
        self.layers = nn.Sequential(*blocks)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        x = images_to_tensor(images, self.image_size).to(self.layers[0].weight.dtype)
        return self.layers(x)


class ForegroundAttention(nn.Module):
    """Spatial attention from channel-pooled statistics, then masked mean pooling.

    With attention disabled the map is all ones and z_fg is the plain mean.
    """

    def __init__(self, enabled: bool = True, kernel_size: int = 7):
        super().__init__()
        self.enabled = enabled
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=False) if enabled else None

    def attention_map(self, z: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            return torch.ones_like(z[:, :1])
        pooled = torch.cat([z.mean(dim=1, keepdim=True), z.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))

    def forward(self, z: torch.Tensor, attention: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        if attention is None:
            attention = self.attention_map(z)
        return (attention * z).mean(dim=(2, 3)), attention


@dataclass
class FieldOutput:
    sigma: torch.Tensor    # (...,) >= 0
    feature: torch.Tensor  # (..., C)


class FeatureField(nn.Module):
    """h(gamma(x), gamma(r), z_fg) -> (sigma, f).

    Density sees the encoded point and the latent only; the feature head
    also gets the encoded ray direction.
    """

    def __init__(self, latent_dim: int, width: int = 128, depth: int = 4,
                 octaves_x: int = 10, octaves_r: int = 4, feature_dim: Optional[int] = None):
        super().__init__()
        self.octaves_x = octaves_x
        self.octaves_r = octaves_r
        self.x_dim = encoded_width(octaves_x)
        self.r_dim = encoded_width(octaves_r)
        self.latent_dim = latent_dim
        feature_dim = feature_dim or latent_dim

        layers = [nn.Linear(self.x_dim + latent_dim, width)]
        layers += [nn.Linear(width, width) for _ in range(depth - 1)]
        self.trunk = nn.ModuleList(layers)
        self.sigma_head = nn.Linear(width, 1)
        self.feature_hidden = nn.Linear(width + self.r_dim, width)
        self.feature_out = nn.Linear(width, feature_dim)

    def forward(self, x_enc: torch.Tensor, r_enc: torch.Tensor, z_fg: torch.Tensor) -> FieldOutput:
        if x_enc.shape[-1] != self.x_dim or r_enc.shape[-1] != self.r_dim or z_fg.shape[-1] != self.latent_dim:
            raise ShapeMismatchError(
                f"field expects widths ({self.x_dim}, {self.r_dim}, {self.latent_dim}), got "
                f"({x_enc.shape[-1]}, {r_enc.shape[-1]}, {z_fg.shape[-1]})")
        z = z_fg.expand(*x_enc.shape[:-1], self.latent_dim)
        r_enc = r_enc.expand(*x_enc.shape[:-1], self.r_dim)

        h = torch.cat([x_enc, z], dim=-1)
        for layer in self.trunk:
            h = F.relu(layer(h))
        sigma = F.softplus(self.sigma_head(h)).squeeze(-1)
        f = F.relu(self.feature_hidden(torch.cat([h, r_enc], dim=-1)))
        return FieldOutput(sigma=sigma, feature=self.feature_out(f))


def cumprod_exclusive(values: torch.Tensor) -> torch.Tensor:
    ones = torch.ones_like(values[..., :1])
    return torch.cumprod(torch.cat([ones, values[..., :-1]], dim=-1), dim=-1)


def composite(sigma: torch.Tensor, features: torch.Tensor,
              deltas: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Alpha-composite per-sample features along the last sample axis.

    sigma, deltas: (..., N); features: (..., N, C). Returns the rendered
    feature (..., C) and the weights tau_n * alpha_n (..., N).
    """
    alpha = 1.0 - torch.exp(-sigma * deltas)
    transmittance = cumprod_exclusive(1.0 - alpha)
    weights = transmittance * alpha
    return (weights[..., None] * features).sum(dim=-2), weights


@dataclass
class RenderedFeatureMap:
    f_phi: torch.Tensor        # (B, C, H, W)
    phi: torch.Tensor          # (B,) azimuths in radians
    weights: torch.Tensor      # (B, H, W, N_s) compositing weights

    @property
    def resolution(self) -> int:
        return self.f_phi.shape[-1]


def volume_render(field: FeatureField, z_fg: torch.Tensor, phi: PhiLike, h: int, w: int, n_s: int,
                  camera: OrbitCamera = OrbitCamera(), stratified: bool = False,
                  generator: Optional[torch.Generator] = None) -> RenderedFeatureMap:
    """Render a C x h x w feature map of the field conditioned on z_fg, seen from phi.

    z_fg is (B, C); phi is a scalar or a (B,) tensor of azimuths.
    """
    batch = z_fg.shape[0]
    dtype = z_fg.dtype
    if isinstance(phi, ViewingDirection):
        phi = phi.azimuth_phi
    phi = torch.as_tensor(phi, dtype=dtype, device=z_fg.device)
    if phi.dim() == 0:
        phi = phi.expand(batch)

    rays = make_rays(phi, h, w, camera, dtype=dtype)
    samples = sample_along(rays, n_s, stratified=stratified, generator=generator)

    x_enc = encode_vector(samples.positions, field.octaves_x)              # (B, h, w, N, Dx)
    r_enc = encode_vector(rays.directions, field.octaves_r)[..., None, :]  # (B, h, w, 1, Dr)
    out = field(x_enc, r_enc, z_fg[:, None, None, None, :])

    rendered, weights = composite(out.sigma, out.feature, samples.deltas)
    return RenderedFeatureMap(f_phi=rendered.permute(0, 3, 1, 2), phi=phi, weights=weights)


class Aggregator(nn.Module):
    """Collapse an h x w feature map to one C-vector: gap, conv or depthwise"""

    def __init__(self, mode: str, channels: int, resolution: int):
        super().__init__()
        if mode not in AGGREGATION_MODES:
            raise ConfigError(f"aggregation must be one of {AGGREGATION_MODES}, got {mode!r}")
        self.mode = mode
        self.resolution = resolution
        if mode == 'conv':
            self.conv = nn.Conv2d(channels, channels, resolution)
        elif mode == 'depthwise':
            self.conv = nn.Conv2d(channels, channels, resolution, groups=channels)
            # starts out as the spatial mean
            nn.init.constant_(self.conv.weight, 1.0 / (resolution * resolution))
            nn.init.zeros_(self.conv.bias)
        else:
            self.conv = None

    def forward(self, f_phi: torch.Tensor) -> torch.Tensor:
        if self.conv is None:
            return f_phi.mean(dim=(2, 3))
        if f_phi.shape[-2:] != (self.resolution, self.resolution):
            raise ShapeMismatchError(
                f"aggregator built for {self.resolution}x{self.resolution}, got {tuple(f_phi.shape[-2:])}")
        return self.conv(f_phi).flatten(1)

