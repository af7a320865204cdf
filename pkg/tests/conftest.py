#!/usr/bin/env python3
"""
Shared test configuration and fixtures
Toy body asset, the miniature run config and network, and a small generated dataset
"""

import sys
from pathlib import Path

import numpy as np
import pytest
import torch

# Add repository root to path so `src.` imports resolve
REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT))

from src.body.asset import save_asset
from src.body.body_model import BodyModel
from src.body.toy_builder import build_toy_asset
from src.config import RunConfig
from src.data.labels import collate
from src.data.synth_data import DatasetManifest, generate, write_dataset
from src.model.network import build_network

MINIATURE_CONFIG = REPO_ROOT / 'config' / 'miniature.env'


@pytest.fixture(scope='session')
def toy_asset():
    """Procedural humanoid built from seed 0"""
    return build_toy_asset(0)


@pytest.fixture(scope='session')
def body64(toy_asset):
    return BodyModel(toy_asset, dtype=torch.float64)


@pytest.fixture
def body32(toy_asset):
    return BodyModel(toy_asset, dtype=torch.float32)


@pytest.fixture(scope='session')
def miniature_config():
    return RunConfig.from_file(MINIATURE_CONFIG)


@pytest.fixture
def miniature_network(miniature_config, toy_asset):
    """(model, decoder) of the miniature config, freshly seeded"""
    return build_network(miniature_config, toy_asset.num_joints, toy_asset.num_betas)


@pytest.fixture(scope='session')
def small_manifest(toy_asset):
    return DatasetManifest(seed=3, n_train=8, n_val=4, image_size=32, fraction_3d=0.5,
                           val_fraction_3d=1.0, asset_id=toy_asset.asset_id)


@pytest.fixture(scope='session')
def train_examples(small_manifest, toy_asset):
    return generate(small_manifest, toy_asset, 'train')


@pytest.fixture(scope='session')
def val_examples(small_manifest, toy_asset):
    return generate(small_manifest, toy_asset, 'val')


@pytest.fixture
def mixed_batch(train_examples, val_examples, toy_asset):
    """Four examples, two with 3D labels and two without"""
    with_3d = [ex for ex in val_examples if ex.has_3d][:2]
    without = [ex.without_3d() for ex in train_examples[:2]]
    return collate(with_3d + without, toy_asset.num_joints, toy_asset.num_betas, toy_asset.num_vertices)


@pytest.fixture(scope='session')
def asset_file(tmp_path_factory, toy_asset):
    return save_asset(toy_asset, tmp_path_factory.mktemp('asset') / 'toy_body.npz')


@pytest.fixture(scope='session')
def dataset_dir(tmp_path_factory, small_manifest, toy_asset):
    """train.hmrd, val.hmrd and manifest.json for the small manifest"""
    out = tmp_path_factory.mktemp('dataset')
    write_dataset(small_manifest, toy_asset, out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
