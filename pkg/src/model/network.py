"""
FeatureFieldHMR: image -> foreground latent -> feature field rendered from
a viewing direction -> view feature -> body parameters.

The silhouette decoder is a separate module owned by the trainer, so the
inference path never builds it. With feature_field off the latent goes
straight to the regressor, which is the ablation baseline.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from src.body.body_model import BodyParams
from src.config import RunConfig
from src.errors import ConfigError, InvalidInputError
from src.model.feature_fields import (Aggregator, FeatureField, ForegroundAttention, ImageEncoder,
                                      RenderedFeatureMap, volume_render)
from src.model.regression_heads import IterativeRegressor, RegressorState, SilhouetteDecoder
from src.rendering.camera_rays import OrbitCamera, PhiLike

logger = logging.getLogger(__name__)


@dataclass
class ViewPrediction:
    feature_map: Optional[RenderedFeatureMap]   # None when the network has no feature field
    z_phi: torch.Tensor
    state: RegressorState

    @property
    def rotmats(self) -> torch.Tensor:
        return self.state.rotmats

    @property
    def shape_beta(self) -> torch.Tensor:
        return self.state.shape_beta

    @property
    def camera_pi(self) -> torch.Tensor:
        return self.state.camera_pi


class FeatureFieldHMR(nn.Module):
    def __init__(self, config: RunConfig, num_joints: int, num_betas: int):
        super().__init__()
        self.config = config
        self.camera = OrbitCamera.from_config(config)
        self.encoder = ImageEncoder(config.channels, config.image_size)
        self.attention = ForegroundAttention(enabled=config.attention)
        self.field: Optional[FeatureField] = None
        self.aggregator: Optional[Aggregator] = None
        if config.feature_field:
            self.field = FeatureField(config.channels, config.field_width, config.field_depth,
                                      config.octaves_x, config.octaves_r)
            self.aggregator = Aggregator(config.aggregation, config.channels, config.feature_map_res)
        self.regressor = IterativeRegressor(config.channels, num_joints, num_betas,
                                            config.regressor_hidden, config.regressor_iters)

    def encode_latent(self, images: torch.Tensor) -> torch.Tensor:
        """(B, S, S, 3) images -> (B, C) foreground latent"""
        z_fg, _ = self.attention(self.encoder(images))
        return z_fg

    def render(self, z_fg: torch.Tensor, phi: PhiLike, stratified: bool = False,
               generator: Optional[torch.Generator] = None) -> RenderedFeatureMap:
        if self.field is None:
            raise ConfigError("this network regresses from the latent directly and renders no feature map")
        res = self.config.feature_map_res
        return volume_render(self.field, z_fg, phi, res, res, self.config.n_samples, self.camera,
                             stratified=stratified, generator=generator)

    def infer_at(self, z_fg: torch.Tensor, phi: PhiLike, stratified: bool = False,
                 generator: Optional[torch.Generator] = None) -> ViewPrediction:
        """Body parameters seen from phi; without a feature field every phi sees the latent itself"""
        if self.field is None:
            return ViewPrediction(None, z_fg, self.regressor(z_fg))
        feature_map = self.render(z_fg, phi, stratified, generator)
        z_phi = self.aggregator(feature_map.f_phi)
        return ViewPrediction(feature_map, z_phi, self.regressor(z_phi))

    def forward(self, images: torch.Tensor, phi: PhiLike = 0.0) -> ViewPrediction:
        return self.infer_at(self.encode_latent(images), phi)

    @torch.no_grad()
    def predict(self, images: torch.Tensor) -> BodyParams:
        """Canonical-view inference with deterministic sampling"""
        return self.forward(images, 0.0).state.to_body_params()

    @torch.no_grad()
    def infer_betas(self, image: torch.Tensor, phis: Sequence[float], chunk: int = 60) -> np.ndarray:
        """Shape coefficients inferred from one image at every azimuth in phis: (len(phis), B)"""
        z_fg = self.encode_latent(image)
        if z_fg.shape[0] != 1:
            raise InvalidInputError("infer_betas takes a single image")
        phis = torch.as_tensor(np.asarray(phis, dtype=np.float64), dtype=z_fg.dtype)
        betas = []
        for start in range(0, len(phis), chunk):
            part = phis[start:start + chunk]
            pred = self.infer_at(z_fg.expand(len(part), -1), part)
            betas.append(pred.shape_beta.cpu().double().numpy())
        return np.concatenate(betas)


def build_network(config: RunConfig, num_joints: int, num_betas: int, with_decoder: bool = True):
    """Seeded construction of the network (and the silhouette decoder when training)"""
    torch.manual_seed(config.seed)
    model = FeatureFieldHMR(config, num_joints, num_betas)
    decoder = SilhouetteDecoder(config.channels) if with_decoder and config.feature_field else None
    logger.info(f"Built network: {sum(p.numel() for p in model.parameters())} parameters, "
                f"feature_field={config.feature_field}, aggregation={config.aggregation}, "
                f"attention={config.attention}, map {config.feature_map_res}x{config.feature_map_res}, {config.n_samples} samples/ray")
    return model, decoder
