#!/usr/bin/env python3
"""
Evaluation metrics: MPJPE, PA-MPJPE, PVE and ESV
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.errors import ShapeMismatchError
from src.evaluation.metrics import (EvalReport, aggregate_esv, esv, esv_from_betas, evaluate_example, mpjpe,
                                    pa_mpjpe, procrustes_align, pve, sweep_angles)


def quaternion_alignment_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Similarity alignment from the top eigenvector of the 4 x 4 quaternion matrix, no SVD"""
    P = pred - pred.mean(axis=0)
    G = gt - gt.mean(axis=0)
    (sxx, sxy, sxz), (syx, syy, syz), (szx, szy, szz) = P.T @ G
    N = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    _, vectors = np.linalg.eigh(N)
    w, x, y, z = vectors[:, -1]
    rot = Rotation.from_quat([x, y, z, w]).as_matrix()
    rotated = P @ rot.T
    scale = np.sum(rotated * G) / np.sum(P ** 2)
    aligned = scale * rotated + gt.mean(axis=0)
    return float(np.linalg.norm(aligned - gt, axis=1).mean())


class ConstantSweeper:
    """Returns the same shape at every azimuth"""

    def __init__(self, betas):
        self.betas = np.asarray(betas, dtype=np.float64)

    def infer_betas(self, image, phis):
        return np.tile(self.betas, (len(phis), 1))


class AlternatingSweeper:
    """Coefficient 0 alternates between +1 and -1, the rest stay at zero"""

    def infer_betas(self, image, phis):
        out = np.zeros((len(phis), 4))
        out[:, 0] = np.where(np.arange(len(phis)) % 2 == 0, 1.0, -1.0)
        return out


@pytest.mark.unit
class TestJointErrors:
    def test_mpjpe_is_root_aligned(self, rng):
        gt = rng.normal(size=(14, 3))
        assert mpjpe(gt + np.array([3.0, -1.0, 2.0]), gt) == pytest.approx(0.0, abs=1e-12)

    def test_mpjpe_value(self):
        gt = np.zeros((4, 3))
        pred = np.zeros((4, 3))
        pred[1:, 0] = 0.2
        assert mpjpe(pred, gt) == pytest.approx(0.15)

    def test_pa_mpjpe_removes_similarity(self, rng):
        """Any scale, rotation and translation of the ground truth scores zero"""
        for _ in range(20):
            gt = rng.normal(size=(17, 3))
            rot = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
            pred = 1.7 * gt @ rot.T + rng.normal(size=3)
            assert pa_mpjpe(pred, gt) == pytest.approx(0.0, abs=1e-9)

    def test_pa_never_exceeds_root_aligned(self, rng):
        """Over 1000 random pairs, aligning can only help"""
        for _ in range(1000):
            gt = rng.normal(size=(8, 3))
            pred = gt + rng.normal(scale=0.3, size=(8, 3))
            assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-9

    def test_pa_mpjpe_matches_quaternion_oracle(self, rng):
        for _ in range(50):
            gt = rng.normal(size=(14, 3))
            rot = Rotation.from_rotvec(rng.normal(size=3)).as_matrix()
            pred = 0.8 * gt @ rot.T + rng.normal(size=3) + rng.normal(scale=0.4, size=(14, 3))
            assert pa_mpjpe(pred, gt) == pytest.approx(quaternion_alignment_error(pred, gt), abs=1e-6)

        S1, S2 = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
        assert pa_mpjpe(S1, S2) == pytest.approx(quaternion_alignment_error(S1, S2), abs=1e-6)

    def test_alignment_is_proper_rotation(self, rng):
        S1, S2 = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
        alignment = procrustes_align(S1, S2)
        assert np.linalg.det(alignment.rotation) == pytest.approx(1.0)
        assert alignment.scale > 0
        assert not alignment.degenerate

    def test_collinear_joints_are_flagged(self):
        line = np.outer(np.linspace(0, 1, 5), [1.0, 2.0, 0.5])
        error, degenerate = pa_mpjpe(line, line + 0.1, return_flag=True)
        assert degenerate
        assert np.isfinite(error)

    def test_shape_checks(self):
        with pytest.raises(ShapeMismatchError):
            mpjpe(np.zeros((4, 3)), np.zeros((5, 3)))
        with pytest.raises(ShapeMismatchError):
            pa_mpjpe(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_pve_has_no_alignment(self):
        gt = np.zeros((6, 3))
        assert pve(gt + np.array([0.0, 0.3, 0.4]), gt) == pytest.approx(0.5)


@pytest.mark.unit
class TestReports:
    def test_eval_report_means(self):
        rows = [{'index': 0, 'mpjpe': 1.0, 'pa_mpjpe': 0.5, 'pve': 2.0, 'degenerate': False},
                {'index': 1, 'mpjpe': 3.0, 'pa_mpjpe': 1.5, 'pve': 4.0, 'degenerate': True}]
        summary = EvalReport.from_examples(rows).summary()
        assert summary == {'mpjpe': 2.0, 'pa_mpjpe': 1.0, 'pve': 3.0, 'n_examples': 2, 'n_degenerate': 1}

    def test_empty_report_is_nan(self):
        report = EvalReport.from_examples([])
        assert np.isnan(report.mpjpe) and report.per_example == []

    def test_evaluate_example_keys(self, rng):
        joints, verts = rng.normal(size=(8, 3)), rng.normal(size=(20, 3))
        row = evaluate_example(3, joints, joints, verts, verts)
        assert row['index'] == 3
        assert row['mpjpe'] == pytest.approx(0.0, abs=1e-12)
        assert row['pa_mpjpe'] == pytest.approx(0.0, abs=1e-9)
        assert row['pve'] == 0.0


@pytest.mark.unit
class TestESV:
    def test_sweep_angles(self):
        angles = sweep_angles(1.0)
        assert len(angles) == 360
        assert angles[0] == 0.0
        assert angles[-1] == pytest.approx(np.radians(359.0))
        assert len(sweep_angles(15.0)) == 24

    def test_constant_shape_has_zero_esv(self):
        report = esv(ConstantSweeper([0.3, -1.0, 2.0]), image=None)
        assert report.esv == pytest.approx(0.0, abs=1e-12)
        assert report.per_coefficient_sigma.shape == (3,)

    def test_population_standard_deviation(self):
        """+-1 alternation gives sigma 1 on that coefficient and ESV 1/4"""
        report = esv(AlternatingSweeper(), image=None, step_deg=2.0)
        np.testing.assert_allclose(report.per_coefficient_sigma, [1.0, 0.0, 0.0, 0.0])
        assert report.esv == pytest.approx(0.25)
        assert report.step_deg == 2.0

    def test_esv_from_betas_matches_numpy(self, rng):
        betas = rng.normal(size=(36, 10))
        assert esv_from_betas(betas).esv == pytest.approx(float(np.std(betas, axis=0).mean()))

    def test_aggregate_over_images(self):
        a = esv_from_betas(np.array([[0.0, 0.0], [2.0, 0.0]]))
        b = esv_from_betas(np.zeros((2, 2)))
        total = aggregate_esv([a, b])
        assert total.esv == pytest.approx(0.25)
        assert total.per_image == [0.5, 0.0]
        np.testing.assert_allclose(total.per_coefficient_sigma, [0.5, 0.0])
        assert total.to_dict()['per_image'] == [0.5, 0.0]
