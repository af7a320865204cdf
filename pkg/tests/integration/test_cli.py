#!/usr/bin/env python3
"""
Command line: asset, data, training and every report command end to end on the miniature config
"""

import json
from pathlib import Path

import pandas as pd
import pytest

import run_hmr
import src.main
from src.body.asset import load_asset
from src.data.sources import RecordFileSource
from src.data.synth_data import dataset_path
from src.main import MeshRecoveryRunner
from src.training.checkpoint import load_checkpoint
from src.utils.exports import load_mesh, save_image

MINIATURE = str(Path(__file__).resolve().parents[2] / 'config' / 'miniature.env')


@pytest.fixture(scope='module')
def workspace(tmp_path_factory, val_examples):
    """Asset, dataset, a two-step training run and a test image, all made through the CLI"""
    root = tmp_path_factory.mktemp('cli')
    asset = root / 'toy_body.npz'
    data = root / 'data'
    run = root / 'run'
    manifest = root / 'manifest.json'
    manifest.write_text(json.dumps({'seed': 5, 'n_train': 6, 'n_val': 3, 'image_size': 32}))
    image = save_image(val_examples[0].image, root / 'person.png')

    assert run_hmr.main(['make-asset', '--asset', str(asset), '--quiet']) == 0
    assert run_hmr.main(['make-data', '--asset', str(asset), '--manifest', str(manifest),
                         '--out', str(data), '--config', MINIATURE, '--quiet']) == 0
    assert run_hmr.main(['train', '--data', str(data), '--asset', str(asset), '--config', MINIATURE,
                         '--max-steps', '2', '--out', str(run), '--quiet']) == 0
    return {'root': root, 'asset': asset, 'data': data, 'run': run, 'image': image,
            'checkpoint': run / 'final.pt'}


@pytest.mark.integration
class TestSetupCommands:
    def test_asset_and_data_written(self, workspace):
        asset = load_asset(workspace['asset'])
        assert asset.asset_id == 'toy-seed0'
        assert dataset_path(workspace['data'], 'train').is_file()
        assert dataset_path(workspace['data'], 'val').is_file()
        assert json.loads((workspace['data'] / 'manifest.json').read_text())['n_val'] == 3

    def test_training_outputs(self, workspace):
        run = workspace['run']
        checkpoint = load_checkpoint(workspace['checkpoint'])
        assert checkpoint.step == 2
        assert checkpoint.config.channels == 8
        assert (run / 'config.env').is_file()
        assert len((run / 'train_log.jsonl').read_text().splitlines()) == 2

    def test_splits_are_read_through_example_sources(self, workspace, tmp_path, monkeypatch):
        """The runner opens dataset files as record-file example sources"""
        opened = []

        class RecordingSource(RecordFileSource):
            def load(self):
                opened.append(self.source_name)
                return super().load()

        monkeypatch.setattr(src.main, 'RecordFileSource', RecordingSource)
        runner = MeshRecoveryRunner(MINIATURE, out_dir=tmp_path, show_progress=False)
        examples = runner.load_split(workspace['data'], 'val', load_asset(workspace['asset']))
        assert opened == ['file:val.hmrd']
        assert len(examples) == 3 and all(ex.has_3d for ex in examples)


@pytest.mark.integration
class TestReportCommands:
    def test_eval(self, workspace, tmp_path):
        assert run_hmr.main(['eval', '--checkpoint', str(workspace['checkpoint']), '--data', str(workspace['data']),
                             '--asset', str(workspace['asset']), '--out', str(tmp_path), '--export', 'csv',
                             'json', '--quiet']) == 0
        report = json.loads((tmp_path / 'eval_report.json').read_text())
        assert report['n_examples'] == 3
        assert report['pa_mpjpe'] <= report['mpjpe'] + 1e-9
        assert len(pd.read_csv(tmp_path / 'eval_per_example.csv')) == 3
        assert (tmp_path / 'eval_per_example.json').is_file()

    def test_render_views(self, workspace, tmp_path):
        assert run_hmr.main(['render-views', '--checkpoint', str(workspace['checkpoint']),
                             '--image', str(workspace['image']), '--asset', str(workspace['asset']),
                             '--angles', '0', '90', '--out', str(tmp_path), '--quiet']) == 0
        views = json.loads((tmp_path / 'views.json').read_text())['views']
        assert [v['degrees'] for v in views] == [0.0, 90.0]
        asset = load_asset(workspace['asset'])
        assert len(load_mesh(tmp_path / 'mesh_090.obj').vertices) == asset.num_vertices
        assert (tmp_path / 'silhouette_000.png').is_file()

    def test_esv_on_one_image(self, workspace, tmp_path):
        assert run_hmr.main(['esv', '--checkpoint', str(workspace['checkpoint']), '--image', str(workspace['image']),
                             '--asset', str(workspace['asset']), '--step-deg', '90', '--charts',
                             '--out', str(tmp_path), '--quiet']) == 0
        report = json.loads((tmp_path / 'esv_report.json').read_text())
        assert report['esv'] >= 0.0
        assert report['step_deg'] == 90.0
        assert (tmp_path / 'esv_sweep.html').is_file()
        assert (tmp_path / 'esv_sigma.html').is_file()

    def test_esv_on_a_split(self, workspace, tmp_path):
        assert run_hmr.main(['esv', '--checkpoint', str(workspace['checkpoint']), '--data', str(workspace['data']),
                             '--asset', str(workspace['asset']), '--step-deg', '120', '--limit', '2',
                             '--out', str(tmp_path), '--quiet']) == 0
        report = json.loads((tmp_path / 'esv_report.json').read_text())
        assert len(report['per_image']) == 2

    def test_bench(self, workspace, tmp_path):
        assert run_hmr.main(['bench', '--checkpoint', str(workspace['checkpoint']), '--resolutions', '1', '2',
                             '--iters', '3', '--warmup', '1', '--out', str(tmp_path), '--quiet']) == 0
        rows = json.loads((tmp_path / 'bench.json').read_text())['rows']
        assert [r['resolution'] for r in rows] == [1, 2]
        assert all(r['fps'] > 0 for r in rows)


@pytest.mark.integration
class TestFailures:
    def test_missing_checkpoint_exits_with_one(self, workspace, tmp_path, capsys):
        code = run_hmr.main(['eval', '--checkpoint', str(tmp_path / 'absent.pt'), '--data', str(workspace['data']),
                             '--asset', str(workspace['asset']), '--out', str(tmp_path), '--quiet'])
        assert code == 1
        assert 'Checkpoint not found' in capsys.readouterr().err

    def test_missing_asset(self, workspace, tmp_path):
        code = run_hmr.main(['eval', '--checkpoint', str(workspace['checkpoint']), '--data', str(workspace['data']),
                             '--asset', str(tmp_path / 'absent.npz'), '--out', str(tmp_path), '--quiet'])
        assert code == 1

    def test_config_that_does_not_match_the_checkpoint(self, workspace, tmp_path):
        config = tmp_path / 'other.env'
        config.write_text('IMAGE_SIZE=32\nCHANNELS=16\n')
        code = run_hmr.main(['eval', '--checkpoint', str(workspace['checkpoint']), '--data', str(workspace['data']),
                             '--asset', str(workspace['asset']), '--config', str(config),
                             '--out', str(tmp_path), '--quiet'])
        assert code == 1

    def test_dataset_image_size_mismatch(self, workspace, tmp_path):
        code = run_hmr.main(['train', '--data', str(workspace['data']), '--asset', str(workspace['asset']),
                             '--out', str(tmp_path), '--quiet'])
        assert code == 1

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            run_hmr.main(['fly'])
