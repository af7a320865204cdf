#!/usr/bin/env python3
"""
Training objectives: canonical, imagination and consistency terms and the mixed-batch dispatch
"""

import math

import numpy as np
import pytest
import torch

from src.body.rotations import batch_rodrigues, random_rotation_vectors, rotate_about_vertical, \
    rotate_global_orient_rotmat
from src.data.labels import collate
from src.errors import InvalidInputError, LossContractError, ShapeMismatchError
from src.rendering.rasterizer import silhouette_from_vertices
from src.training.losses import (BodyOutputs, LossWeights, canonical_loss, canonical_terms, consistency_loss,
                                 ground_truth_silhouettes, gt_rotmats, imagination_loss, imagination_terms,
                                 total_loss)

WEIGHTS = LossWeights()


@pytest.fixture
def batch3d(val_examples, toy_asset):
    """Float64 batch where every example carries 3D labels"""
    return collate(val_examples, toy_asset.num_joints, toy_asset.num_betas, toy_asset.num_vertices,
                   dtype=torch.float64)


def perfect_canonical(batch) -> BodyOutputs:
    return BodyOutputs(gt_rotmats(batch.pose_theta), batch.shape_beta.clone(),
                       batch.joints3d.clone(), batch.keypoints2d.clone())


def perfect_at(batch, phi) -> BodyOutputs:
    """Ground truth as a viewer at azimuth phi sees it"""
    return BodyOutputs(rotate_global_orient_rotmat(gt_rotmats(batch.pose_theta), phi), batch.shape_beta.clone(),
                       rotate_about_vertical(batch.joints3d, -phi))


@pytest.mark.unit
class TestLossWeights:
    def test_defaults(self):
        assert (WEIGHTS.lambda_2d, WEIGHTS.lambda_3d, WEIGHTS.lambda_pose) == (300.0, 300.0, 60.0)
        assert WEIGHTS.lambda_shape == pytest.approx(0.06)
        assert WEIGHTS.lambda_silh == 30.0

    def test_negative_weight_rejected(self):
        with pytest.raises(InvalidInputError):
            LossWeights(lambda_3d=-1.0)

    def test_from_config(self, miniature_config):
        assert LossWeights.from_config(miniature_config).lambda_silh == miniature_config.lambda_silh


@pytest.mark.unit
class TestCanonicalLoss:
    def test_perfect_prediction_is_zero(self, batch3d):
        loss = canonical_loss(perfect_canonical(batch3d), batch3d, WEIGHTS)
        assert loss.shape == (len(batch3d),)
        torch.testing.assert_close(loss, torch.zeros_like(loss))

    def test_3d_terms_are_masked_without_labels(self, mixed_batch):
        """Wrong 3D predictions cost nothing on 2D-only rows"""
        pred = perfect_canonical(mixed_batch)
        pred.joints3d = pred.joints3d + 1.0
        pred.shape_beta = pred.shape_beta + 1.0
        terms = canonical_terms(pred, mixed_batch, WEIGHTS)
        has_3d = mixed_batch.has_3d
        assert (terms['3d'][has_3d] > 0).all()
        assert (terms['shape'][has_3d] > 0).all()
        assert torch.equal(terms['3d'][~has_3d], torch.zeros(int((~has_3d).sum())))
        assert torch.equal(terms['2d'], torch.zeros(len(mixed_batch)))

    def test_keypoint_error_is_weighted_squared_distance(self, batch3d):
        pred = perfect_canonical(batch3d)
        pred.keypoints2d = pred.keypoints2d + 0.1
        terms = canonical_terms(pred, batch3d, WEIGHTS)
        n_kp = batch3d.keypoints2d.shape[1]
        expected = torch.full((len(batch3d),), 300.0 * n_kp * 2 * 0.01, dtype=torch.float64)
        torch.testing.assert_close(terms['2d'], expected)

    def test_shape_mismatch(self, batch3d):
        pred = perfect_canonical(batch3d)
        pred.keypoints2d = pred.keypoints2d[:, :-1]
        with pytest.raises(ShapeMismatchError):
            canonical_loss(pred, batch3d, WEIGHTS)


@pytest.mark.unit
class TestImaginationLoss:
    def silhouettes(self, batch, body64, phi):
        return ground_truth_silhouettes(batch.vertices, body64.faces, phi, 32)

    def test_perfect_prediction_is_zero(self, batch3d, body64):
        """Targets follow the viewer: joints by R_y(-phi), orientation re-expressed"""
        phi = torch.tensor([0.3, 1.7, 3.1, 5.9], dtype=torch.float64)[:len(batch3d)]
        gt_silh = self.silhouettes(batch3d, body64, phi)
        loss = imagination_loss(perfect_at(batch3d, phi), gt_silh, batch3d, phi, WEIGHTS, gt_silh)
        torch.testing.assert_close(loss, torch.zeros_like(loss), atol=1e-10, rtol=0)

    def test_canonical_target_is_wrong_from_the_side(self, batch3d, body64):
        phi = torch.full((len(batch3d),), math.pi / 2, dtype=torch.float64)
        gt_silh = self.silhouettes(batch3d, body64, phi)
        pred = perfect_canonical(batch3d)
        terms = imagination_terms(BodyOutputs(pred.rotmats, pred.shape_beta, pred.joints3d), gt_silh,
                                  batch3d, phi, WEIGHTS, gt_silh)
        assert (terms['3d'] > 0).all()
        assert (terms['pose'] > 0).all()
        torch.testing.assert_close(terms['shape'], torch.zeros(len(batch3d), dtype=torch.float64))

    def test_silhouette_term_is_pixel_mean(self, batch3d, body64):
        phi = torch.zeros(len(batch3d), dtype=torch.float64)
        gt_silh = self.silhouettes(batch3d, body64, phi)
        terms = imagination_terms(perfect_at(batch3d, phi), torch.ones_like(gt_silh), batch3d, phi,
                                  WEIGHTS, gt_silh)
        expected = 30.0 * (1.0 - gt_silh).flatten(1).mean(dim=1)
        torch.testing.assert_close(terms['silh'], expected)

    def test_canonical_view_matches_canonical_terms(self, batch3d, rng):
        """At phi = 0 the 3D, pose and shape terms are the canonical ones"""
        n = len(batch3d)
        target = gt_rotmats(batch3d.pose_theta)
        noise = torch.from_numpy(random_rotation_vectors(n * target.shape[1], rng, max_angle=0.5))
        pred = BodyOutputs(target @ batch_rodrigues(noise).reshape(n, -1, 3, 3),
                           batch3d.shape_beta + 0.3, batch3d.joints3d + 0.05, batch3d.keypoints2d.clone())
        silh = torch.zeros(n, 8, 8, dtype=torch.float64)
        imagined = imagination_terms(pred, silh, batch3d, torch.zeros(n, dtype=torch.float64), WEIGHTS, silh)
        canonical = canonical_terms(pred, batch3d, WEIGHTS)
        for key in ('3d', 'pose', 'shape'):
            assert (canonical[key] > 0).all(), key
            torch.testing.assert_close(imagined[key], canonical[key], atol=1e-10, rtol=0)

    def test_needs_3d_labels(self, mixed_batch, body32):
        phi = torch.zeros(len(mixed_batch))
        pred = BodyOutputs(torch.eye(3).expand(len(mixed_batch), body32.num_joints, 3, 3),
                           mixed_batch.shape_beta, mixed_batch.joints3d)
        silh = torch.zeros(len(mixed_batch), 8, 8)
        with pytest.raises(LossContractError):
            imagination_loss(pred, silh, mixed_batch, phi, WEIGHTS, silh)


@pytest.mark.unit
class TestConsistencyLoss:
    def random_outputs(self, rng, n, k, num_betas) -> BodyOutputs:
        rotvecs = torch.from_numpy(random_rotation_vectors(n * k, rng).reshape(n, k, 3))
        return BodyOutputs(batch_rodrigues(rotvecs), torch.from_numpy(rng.normal(size=(n, num_betas))))

    def test_consistent_views_cost_nothing(self, rng):
        """A pose moved from phi1 to phi2 matches the prediction at phi2"""
        pred1 = self.random_outputs(rng, 6, 5, 4)
        phi1 = torch.from_numpy(rng.uniform(0, 2 * math.pi, 6))
        phi2 = torch.from_numpy(rng.uniform(0, 2 * math.pi, 6))
        pred2 = BodyOutputs(rotate_global_orient_rotmat(pred1.rotmats, phi2 - phi1), pred1.shape_beta.clone())
        loss = consistency_loss(pred1, pred2, phi1, phi2, WEIGHTS)
        torch.testing.assert_close(loss, torch.zeros(6, dtype=torch.float64), atol=1e-12, rtol=0)

    def test_same_prediction_at_different_views_is_penalised(self, rng):
        pred = self.random_outputs(rng, 3, 5, 4)
        phi1 = torch.zeros(3, dtype=torch.float64)
        phi2 = torch.full((3,), 1.0, dtype=torch.float64)
        assert (consistency_loss(pred, pred, phi1, phi2, WEIGHTS) > 0).all()

    def test_shared_global_pre_rotation_changes_nothing(self, rng):
        """Right-multiplying both global orientations by one rotation leaves the pose term unchanged"""
        pred1 = self.random_outputs(rng, 4, 5, 4)
        pred2 = self.random_outputs(rng, 4, 5, 4)
        phi1 = torch.from_numpy(rng.uniform(0, 2 * math.pi, 4))
        phi2 = torch.from_numpy(rng.uniform(0, 2 * math.pi, 4))
        gauge = batch_rodrigues(torch.from_numpy(random_rotation_vectors(1, rng)))[0]

        def pre_rotated(pred):
            rotmats = pred.rotmats.clone()
            rotmats[:, 0] = rotmats[:, 0] @ gauge
            return BodyOutputs(rotmats, pred.shape_beta)

        torch.testing.assert_close(consistency_loss(pre_rotated(pred1), pre_rotated(pred2), phi1, phi2, WEIGHTS),
                                   consistency_loss(pred1, pred2, phi1, phi2, WEIGHTS), atol=1e-10, rtol=0)

    def test_shape_disagreement(self, rng):
        pred1 = self.random_outputs(rng, 2, 5, 4)
        pred2 = BodyOutputs(pred1.rotmats, pred1.shape_beta + 0.5)
        zero = torch.zeros(2, dtype=torch.float64)
        expected = torch.full((2,), 0.06 * 4 * 0.25, dtype=torch.float64)
        torch.testing.assert_close(consistency_loss(pred1, pred2, zero, zero, WEIGHTS), expected)


@pytest.mark.unit
class TestGroundTruthSilhouettes:
    def test_matches_rasterizer(self, toy_asset, body64):
        vertices = torch.from_numpy(toy_asset.template_vertices)[None]
        masks = ground_truth_silhouettes(vertices, body64.faces, torch.tensor([0.5]), 32)
        expected = silhouette_from_vertices(toy_asset.template_vertices, toy_asset.faces, 0.5, 32)
        np.testing.assert_array_equal(masks[0].numpy(), expected)


@pytest.mark.unit
class TestTotalLoss:
    def test_breakdown_is_finite(self, miniature_network, body32, mixed_batch):
        model, decoder = miniature_network
        loss, breakdown = total_loss(mixed_batch, model, decoder, body32, WEIGHTS,
                                     generator=torch.Generator().manual_seed(0))
        assert loss.ndim == 0 and torch.isfinite(loss)
        for key in ('loss/canonical', 'loss/imagination', 'loss/consistency', 'loss/total', 'loss/imag_silh'):
            assert torch.isfinite(breakdown[key]), key
        assert breakdown['loss/imagination'] > 0
        assert breakdown['loss/consistency'] >= 0
        torch.testing.assert_close(breakdown['loss/total'], loss)

    def test_flags_switch_terms_off(self, miniature_network, body32, mixed_batch):
        model, decoder = miniature_network
        loss, breakdown = total_loss(mixed_batch, model, decoder, body32, WEIGHTS,
                                     generator=torch.Generator().manual_seed(0),
                                     use_imagination=False, use_consistency=False)
        assert breakdown['loss/imagination'].item() == 0.0
        assert breakdown['loss/consistency'].item() == 0.0
        torch.testing.assert_close(loss, breakdown['loss/canonical'])

    def test_all_3d_batch_has_no_consistency_term(self, miniature_network, body32, val_examples, toy_asset):
        model, decoder = miniature_network
        batch = collate(val_examples, toy_asset.num_joints, toy_asset.num_betas, toy_asset.num_vertices)
        _, breakdown = total_loss(batch, model, decoder, body32, WEIGHTS, generator=torch.Generator().manual_seed(0))
        assert breakdown['loss/consistency'].item() == 0.0
        assert breakdown['loss/imagination'].item() > 0.0

    def test_all_2d_batch_has_no_imagination_term(self, miniature_network, body32, train_examples, toy_asset):
        model, decoder = miniature_network
        batch = collate([ex.without_3d() for ex in train_examples[:4]], toy_asset.num_joints,
                        toy_asset.num_betas, toy_asset.num_vertices)
        _, breakdown = total_loss(batch, model, decoder, body32, WEIGHTS, generator=torch.Generator().manual_seed(0))
        assert breakdown['loss/imagination'].item() == 0.0
        assert breakdown['loss/imag_silh'].item() == 0.0

    def test_imagination_needs_decoder(self, miniature_network, body32, mixed_batch):
        model, _ = miniature_network
        with pytest.raises(LossContractError):
            total_loss(mixed_batch, model, None, body32, WEIGHTS)

    def test_gradients_reach_every_module(self, miniature_network, body32, mixed_batch):
        model, decoder = miniature_network
        loss, _ = total_loss(mixed_batch, model, decoder, body32, WEIGHTS,
                             generator=torch.Generator().manual_seed(0))
        loss.backward()
        for name in ('encoder', 'field', 'aggregator', 'regressor'):
            grads = [p.grad for p in getattr(model, name).parameters()]
            assert any(g is not None and g.abs().sum() > 0 for g in grads), name
        assert any(p.grad is not None for p in decoder.parameters())
