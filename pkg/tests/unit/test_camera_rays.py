#!/usr/bin/env python3
"""
Orbit camera, ray generation, depth sampling and positional encoding
"""

import math

import pytest
import torch
from scipy.spatial.transform import Rotation

from src.errors import InvalidInputError
from src.rendering.camera_rays import (CANONICAL, OrbitCamera, ViewingDirection, camera_position,
                                       encode_vector, encoded_width, make_rays, positional_encode,
                                       sample_along)


@pytest.mark.unit
class TestViewingDirection:
    def test_azimuth_wraps(self):
        assert ViewingDirection(2 * math.pi + 0.5).azimuth_phi == pytest.approx(0.5)
        assert ViewingDirection(-0.5).azimuth_phi == pytest.approx(2 * math.pi - 0.5)

    def test_canonical(self):
        assert CANONICAL.is_canonical
        assert ViewingDirection.from_degrees(360.0).is_canonical
        assert not ViewingDirection.from_degrees(90.0).is_canonical

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            ViewingDirection(float('inf'))

    def test_camera_on_orbit(self):
        """phi=0 sits on +z, phi=pi/2 on +x, always at the orbit radius"""
        pos0 = camera_position(0.0, dtype=torch.float64)
        pos90 = camera_position(math.pi / 2, dtype=torch.float64)
        torch.testing.assert_close(pos0, torch.tensor([0.0, 0.0, 2.5], dtype=torch.float64))
        torch.testing.assert_close(pos90, torch.tensor([2.5, 0.0, 0.0], dtype=torch.float64), atol=1e-12, rtol=0)


@pytest.mark.unit
class TestMakeRays:
    def test_single_ray_points_at_origin(self):
        rays = make_rays(0.0, 1, 1, dtype=torch.float64)
        torch.testing.assert_close(rays.origins[0, 0], torch.tensor([0.0, 0.0, 2.5], dtype=torch.float64))
        torch.testing.assert_close(rays.directions[0, 0], torch.tensor([0.0, 0.0, -1.0], dtype=torch.float64))

    def test_unit_directions_and_shape(self):
        rays = make_rays(0.3, 4, 4, dtype=torch.float64)
        assert rays.directions.shape == (4, 4, 3)
        norms = torch.linalg.vector_norm(rays.directions, dim=-1)
        torch.testing.assert_close(norms, torch.ones(4, 4, dtype=torch.float64))

    def test_top_row_looks_up(self):
        """Row 0 is the top of the map: its rays point to +y"""
        rays = make_rays(0.0, 2, 2, dtype=torch.float64)
        assert (rays.directions[0, :, 1] > 0).all()
        assert (rays.directions[1, :, 1] < 0).all()
        assert rays.directions[0, 0, 0] < 0 < rays.directions[0, 1, 0]

    def test_frame_geometry_from_camera(self):
        """The frame half-angle is set by bound_radius / orbit_radius"""
        camera = OrbitCamera()
        rays = make_rays(0.0, 1, 1, camera, dtype=torch.float64)
        assert camera.tan_half_angle == pytest.approx(1.2 / 2.5)
        assert rays.near == 1.3 and rays.far == 3.7

    def test_batched_azimuths(self):
        """A (B,) azimuth tensor gives one rotated grid per entry"""
        phis = torch.tensor([0.0, math.pi / 2], dtype=torch.float64)
        rays = make_rays(phis, 3, 3)
        assert rays.directions.shape == (2, 3, 3, 3)
        torch.testing.assert_close(rays.directions[1, 1, 1], torch.tensor([-1.0, 0.0, 0.0], dtype=torch.float64),
                                   atol=1e-12, rtol=0)
        single = make_rays(math.pi / 2, 3, 3, dtype=torch.float64)
        torch.testing.assert_close(rays.directions[1], single.directions)

    def test_orbit_turns_the_whole_bundle(self):
        """Rays at phi turned back by R_y(-phi) are the rays at 0"""
        base = make_rays(0.0, 3, 4, dtype=torch.float64)
        for phi in (0.7, 2.0, 5.5):
            rays = make_rays(phi, 3, 4, dtype=torch.float64)
            back = torch.from_numpy(Rotation.from_euler('y', -phi).as_matrix())
            torch.testing.assert_close(rays.directions @ back.T, base.directions, atol=1e-12, rtol=0)
            torch.testing.assert_close(rays.origins @ back.T, base.origins, atol=1e-12, rtol=0)

    def test_rays_cross_the_bounding_sphere(self):
        """Every ray of a 4x4 grid passes within bound_radius of the origin, between near and far"""
        camera = OrbitCamera()
        rays = make_rays(torch.tensor([0.0, 1.1, 4.0], dtype=torch.float64), 4, 4, camera)
        closest = torch.linalg.vector_norm(torch.cross(rays.origins, rays.directions, dim=-1), dim=-1)
        assert (closest < camera.bound_radius).all()
        along = -(rays.origins * rays.directions).sum(dim=-1)
        assert ((along > camera.near) & (along < camera.far)).all()

    def test_empty_grid_rejected(self):
        with pytest.raises(InvalidInputError):
            make_rays(0.0, 0, 4)


@pytest.mark.unit
class TestSampling:
    def test_deterministic_depths_are_linspace(self):
        rays = make_rays(0.0, 2, 2, dtype=torch.float64)
        samples = sample_along(rays, 8)
        torch.testing.assert_close(samples.depths[0, 0], torch.linspace(1.3, 3.7, 8, dtype=torch.float64))
        assert samples.positions.shape == (2, 2, 8, 3)

    def test_last_delta_is_bin_width(self):
        samples = sample_along(make_rays(0.0, 1, 1, dtype=torch.float64), 4)
        assert samples.deltas[0, 0, -1].item() == pytest.approx((3.7 - 1.3) / 4)
        assert samples.deltas[0, 0, 0].item() == pytest.approx((3.7 - 1.3) / 3)

    def test_stratified_one_depth_per_bin(self):
        rays = make_rays(0.0, 3, 3, dtype=torch.float64)
        samples = sample_along(rays, 16, stratified=True, generator=torch.Generator().manual_seed(0))
        width = (3.7 - 1.3) / 16
        lower = 1.3 + torch.arange(16, dtype=torch.float64) * width
        assert (samples.depths >= lower).all()
        assert (samples.depths < lower + width).all()

    def test_stratified_is_seeded(self):
        rays = make_rays(0.0, 2, 2, dtype=torch.float64)
        a = sample_along(rays, 8, True, torch.Generator().manual_seed(5)).depths
        b = sample_along(rays, 8, True, torch.Generator().manual_seed(5)).depths
        assert torch.equal(a, b)

    def test_points_lie_on_rays(self):
        rays = make_rays(1.0, 2, 2, dtype=torch.float64)
        samples = sample_along(rays, 5)
        dist = torch.linalg.vector_norm(samples.positions - rays.origins[..., None, :], dim=-1)
        torch.testing.assert_close(dist, samples.depths)

    def test_needs_two_samples(self):
        with pytest.raises(InvalidInputError):
            sample_along(make_rays(0.0, 1, 1), 1)


@pytest.mark.unit
class TestPositionalEncoding:
    def test_widths(self):
        assert encoded_width(10) == 66
        assert encoded_width(4) == 30
        x = torch.zeros(7, 3)
        assert encode_vector(x, 10).shape == (7, 66)

    def test_frequencies_start_at_pi(self):
        """First pair is sin(pi v), cos(pi v); last pair uses 2^L pi"""
        enc = positional_encode(torch.tensor([0.25], dtype=torch.float64), 2)
        expected = torch.tensor([math.sin(math.pi / 4), math.cos(math.pi / 4),
                                 math.sin(math.pi / 2), math.cos(math.pi / 2),
                                 math.sin(math.pi), math.cos(math.pi)], dtype=torch.float64)
        torch.testing.assert_close(enc[0], expected, atol=1e-12, rtol=0)

    def test_zero_octaves(self):
        enc = positional_encode(torch.tensor(0.5, dtype=torch.float64), 0)
        assert enc.shape == (2,)
