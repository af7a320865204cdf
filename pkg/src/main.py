import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch

from src.body.asset import BodyModelAsset, load_asset, save_asset
from src.body.body_model import BodyModel
from src.body.toy_builder import build_toy_asset
from src.config import Config, RENDER_RESOLUTIONS, RunConfig, load_run_config
from src.data.labels import LabeledExample
from src.data.sources import RecordFileSource
from src.data.synth_data import DatasetManifest, dataset_manifest, dataset_path, write_dataset
from src.errors import AssetError, CheckpointError, ConfigError, DatasetError
from src.evaluation.benchmark import BenchRow, bench
from src.evaluation.evaluator import esv_over_examples, evaluate
from src.evaluation.metrics import ESVReport, EvalReport, esv, sweep_angles
from src.model.network import build_network
from src.model.regression_heads import decode_silhouette
from src.training.checkpoint import load_checkpoint, restore_network
from src.training.trainer import Trainer, TrainingResult
from src.utils import charts
from src.utils.exports import export_mesh, load_image, save_mask
from src.utils.reporting import atomic_write_json, export_table

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# loss-term and architecture variants trained by the ablation command
ABLATION_VARIANTS = {
    'reg': {'use_imagination': False, 'use_consistency': False},
    'reg+imag': {'use_imagination': True, 'use_consistency': False},
    'full': {'use_imagination': True, 'use_consistency': True},
    'gap': {'aggregation': 'gap'},
    'conv': {'aggregation': 'conv'},
    'no-attention': {'attention': False},
    'gap-no-attention': {'aggregation': 'gap', 'attention': False},
    'conv-no-attention': {'aggregation': 'conv', 'attention': False},
    'baseline': {'feature_field': False, 'use_imagination': False, 'use_consistency': False},
}
DEFAULT_ABLATION = ('reg', 'reg+imag', 'full')


class MeshRecoveryRunner:
    """One method per CLI command. Every output lands under out_dir."""

    def __init__(self, config_path: Optional[PathLike] = None, seed: Optional[int] = None,
                 out_dir: PathLike = 'runs/default', charts: bool = False,
                 export_formats: Sequence[str] = ('csv',), show_progress: bool = True):
        Config.setup_logging()
        Config.validate()

        self.config_path = Path(config_path) if config_path else None
        self.config = load_run_config(config_path, seed)
        self.out_dir = Path(out_dir)
        self.charts = charts
        self.export_formats = tuple(export_formats)
        self.show_progress = show_progress
        logger.info(f"Runner ready: config={self.config_path or 'defaults'}, seed={self.config.seed}, "
                    f"out={self.out_dir}")

    # --- inputs -------------------------------------------------------------

    def load_body_asset(self, asset_path: Optional[PathLike] = None) -> BodyModelAsset:
        path = Path(asset_path or Config.ASSET_PATH)
        if not path.is_file():
            raise AssetError(f"Body asset not found: {path} (create one with the make-asset command)")
        return load_asset(path)

    @staticmethod
    def split_file(data: PathLike, split: str) -> Path:
        """A dataset directory resolves to its split file; a file is used as is"""
        data = Path(data)
        return dataset_path(data, split) if data.is_dir() else data

    def load_split(self, data: PathLike, split: str, asset: BodyModelAsset,
                   image_size: Optional[int] = None) -> List[LabeledExample]:
        path = self.split_file(data, split)
        if not path.is_file():
            raise DatasetError(f"Dataset file not found: {path}")
        manifest = dataset_manifest(path)
        image_size = image_size or self.config.image_size
        if manifest.image_size != image_size:
            raise ConfigError(f"Dataset {path} has {manifest.image_size}px images, "
                              f"the network expects {image_size}px")
        return RecordFileSource(path, asset).examples()

    def load_network(self, checkpoint_path: PathLike, asset: BodyModelAsset, with_decoder: bool = False):
        checkpoint = load_checkpoint(checkpoint_path)
        if checkpoint.asset_hash and checkpoint.asset_hash != asset.content_hash():
            raise CheckpointError(f"Checkpoint {checkpoint_path} was trained on a different body asset")
        if checkpoint.num_joints != asset.num_joints or checkpoint.num_betas != asset.num_betas:
            raise CheckpointError(f"Checkpoint expects {checkpoint.num_joints} joints and "
                                  f"{checkpoint.num_betas} shape coefficients")
        # an explicit config must describe the checkpoint's architecture
        explicit = self.config if self.config_path else None
        model, decoder = restore_network(checkpoint, with_decoder=with_decoder, config=explicit)
        model.eval()
        if decoder is not None:
            decoder.eval()
        return checkpoint, model, decoder

    # --- commands -----------------------------------------------------------

    def cmd_make_asset(self, path: Optional[PathLike] = None, seed: Optional[int] = None) -> Path:
        asset = build_toy_asset(seed if seed is not None else self.config.seed)
        out = save_asset(asset, path or Config.ASSET_PATH)
        logger.info(f"Toy body asset written to {out} (hash {asset.content_hash()[:12]})")
        return out

    def cmd_make_data(self, asset_path: Optional[PathLike] = None, manifest_path: Optional[PathLike] = None,
                      out_dir: Optional[PathLike] = None) -> Dict[str, Path]:
        asset = self.load_body_asset(asset_path)
        if manifest_path:
            manifest = DatasetManifest.from_file(manifest_path)
        else:
            manifest = DatasetManifest(seed=self.config.seed, image_size=self.config.image_size,
                                       asset_id=asset.asset_id)
        if manifest.image_size != self.config.image_size:
            logger.warning(f"Manifest image size {manifest.image_size} differs from config "
                           f"image size {self.config.image_size}")
        paths = write_dataset(manifest, asset, out_dir or self.out_dir, show_progress=self.show_progress)
        for split, path in paths.items():
            logger.info(f"Wrote {split} split: {path}")
        return paths

    def cmd_train(self, data: PathLike, asset_path: Optional[PathLike] = None,
                  max_steps: Optional[int] = None, config: Optional[RunConfig] = None,
                  out_dir: Optional[PathLike] = None) -> TrainingResult:
        """Train on the train split; writes the config, the step log, epoch and final checkpoints"""
        config = config or self.config
        out_dir = Path(out_dir or self.out_dir)
        asset = self.load_body_asset(asset_path)
        examples = self.load_split(data, 'train', asset, config.image_size)

        config.to_file(out_dir / 'config.env')
        body = BodyModel(asset)
        model, decoder = build_network(config, asset.num_joints, asset.num_betas, with_decoder=True)
        trainer = Trainer(config, body, model, decoder, out_dir=out_dir,
                          asset_hash=asset.content_hash(), show_progress=self.show_progress)
        result = trainer.train(examples, max_steps=max_steps, final_path=out_dir / 'final.pt')
        logger.info(f"Training finished: {result.steps} steps, {result.epochs} epochs, "
                    f"final loss {result.final_loss:.6f}")
        return result

    def cmd_eval(self, checkpoint_path: PathLike, data: PathLike, split: str = 'val',
                 asset_path: Optional[PathLike] = None) -> EvalReport:
        """Canonical-view metrics; the checkpoint is only read"""
        asset = self.load_body_asset(asset_path)
        _, model, _ = self.load_network(checkpoint_path, asset, with_decoder=False)
        examples = self.load_split(data, split, asset, model.config.image_size)
        report = evaluate(model, BodyModel(asset), examples, show_progress=self.show_progress)

        atomic_write_json(self.out_dir / 'eval_report.json', report.to_dict())
        export_table(report.per_example, self.out_dir / 'eval_per_example', self.export_formats)
        return report

    def cmd_render_views(self, checkpoint_path: PathLike, image_path: PathLike,
                         angles_deg: Sequence[float] = (0.0, 90.0, 180.0, 270.0),
                         asset_path: Optional[PathLike] = None) -> List[Dict]:
        """Mesh (OBJ) and decoded silhouette (PNG) inferred at every azimuth"""
        asset = self.load_body_asset(asset_path)
        _, model, decoder = self.load_network(checkpoint_path, asset, with_decoder=True)
        body = BodyModel(asset)
        image = load_image(image_path, model.config.image_size)

        views = []
        with torch.no_grad():
            z_fg = model.encode_latent(torch.as_tensor(image)[None])
            for degrees in angles_deg:
                pred = model.infer_at(z_fg, math.radians(degrees))
                vertices, _ = body.forward_rotmats(pred.rotmats.to(body.template.dtype),
                                                   pred.shape_beta.to(body.template.dtype))
                tag = f"{int(round(degrees)) % 360:03d}"
                mesh_path = export_mesh(vertices[0].double().numpy(), asset.faces,
                                        self.out_dir / f'mesh_{tag}.obj')
                mask_path = None
                if pred.feature_map is not None:
                    silhouette = decode_silhouette(decoder, pred.feature_map.f_phi)[0]
                    mask_path = save_mask(silhouette.double().numpy(), self.out_dir / f'silhouette_{tag}.png')
                views.append({'degrees': float(degrees), 'mesh': str(mesh_path),
                              'silhouette': str(mask_path) if mask_path else None,
                              'shape_beta': pred.shape_beta[0].double().tolist()})
                logger.info(f"View {degrees:g} deg: {mesh_path.name}")

        atomic_write_json(self.out_dir / 'views.json', {'image': str(image_path), 'views': views})
        return views

    def cmd_esv(self, checkpoint_path: PathLike, data: Optional[PathLike] = None,
                image_path: Optional[PathLike] = None, split: str = 'val', step_deg: float = 1.0,
                limit: Optional[int] = None, asset_path: Optional[PathLike] = None) -> ESVReport:
        if (data is None) == (image_path is None):
            raise ConfigError("esv takes exactly one of a dataset or an image")
        asset = self.load_body_asset(asset_path)
        _, model, _ = self.load_network(checkpoint_path, asset, with_decoder=False)

        if image_path is not None:
            image = torch.as_tensor(load_image(image_path, model.config.image_size))[None]
            report = esv(model, image, step_deg)
            if self.charts:
                betas = model.infer_betas(image, sweep_angles(step_deg))
                charts.save_chart(charts.create_shape_sweep_chart(
                    np.degrees(sweep_angles(step_deg)), betas), self.out_dir / 'esv_sweep.html')
        else:
            examples = self.load_split(data, split, asset, model.config.image_size)
            report = esv_over_examples(model, examples, step_deg, limit, show_progress=self.show_progress)

        atomic_write_json(self.out_dir / 'esv_report.json', report.to_dict())
        rows = [{'coefficient': i, 'sigma': float(s)} for i, s in enumerate(report.per_coefficient_sigma)]
        export_table(rows, self.out_dir / 'esv_sigma', self.export_formats)
        if self.charts:
            charts.save_chart(charts.create_sigma_bar_chart(report.per_coefficient_sigma),
                              self.out_dir / 'esv_sigma.html')
        logger.info(f"ESV {report.esv:.6f}")
        return report

    def cmd_bench(self, checkpoint_path: PathLike, resolutions: Sequence[int] = RENDER_RESOLUTIONS,
                  iterations: Optional[int] = None, warmup: Optional[int] = None) -> List[BenchRow]:
        checkpoint = load_checkpoint(checkpoint_path)
        if self.config_path:
            checkpoint.check_compatible(self.config)
        rows = bench(checkpoint, resolutions, iterations, warmup, show_progress=self.show_progress)

        table = [row.to_dict() for row in rows]
        atomic_write_json(self.out_dir / 'bench.json', {'rows': table})
        export_table(table, self.out_dir / 'bench', self.export_formats)
        if self.charts:
            charts.save_chart(charts.create_bench_chart(table), self.out_dir / 'bench.html')
        return rows

    def cmd_ablate(self, data: PathLike, variants: Sequence[str] = DEFAULT_ABLATION,
                   asset_path: Optional[PathLike] = None, max_steps: Optional[int] = None,
                   esv_step_deg: float = 1.0, esv_limit: Optional[int] = 20) -> List[Dict]:
        """Train each variant on the same data, then tabulate its validation metrics and ESV"""
        unknown = [v for v in variants if v not in ABLATION_VARIANTS]
        if unknown:
            raise ConfigError(f"Unknown ablation variants {unknown}; choose from {sorted(ABLATION_VARIANTS)}")
        asset = self.load_body_asset(asset_path)
        val = self.load_split(data, 'val', asset)
        body = BodyModel(asset)

        rows = []
        for name in variants:
            variant_dir = self.out_dir / name.replace('+', '_')
            config = self.config.with_overrides(**ABLATION_VARIANTS[name])
            logger.info(f"Ablation variant {name}: {ABLATION_VARIANTS[name]}")
            result = self.cmd_train(data, asset_path, max_steps=max_steps, config=config, out_dir=variant_dir)

            model, _ = restore_network(result.checkpoint, with_decoder=False)
            model.eval()
            report = evaluate(model, body, val, show_progress=self.show_progress)
            esv_report = esv_over_examples(model, val, esv_step_deg, esv_limit, show_progress=self.show_progress)
            rows.append({'variant': name, 'steps': result.steps, 'final_loss': result.final_loss,
                         **{k: v for k, v in report.summary().items() if k in ('mpjpe', 'pa_mpjpe', 'pve')},
                         'esv': esv_report.esv})

        atomic_write_json(self.out_dir / 'ablation.json', {'rows': rows})
        export_table(rows, self.out_dir / 'ablation', self.export_formats, sheet_name='Ablation')
        if self.charts:
            for metric in ('mpjpe', 'esv'):
                charts.save_chart(charts.create_ablation_chart(rows, metric), self.out_dir / f'ablation_{metric}.html')
        return rows
