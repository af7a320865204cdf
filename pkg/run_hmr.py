#!/usr/bin/env python3
"""
Feature-field human mesh recovery - Main Runner Script

Usage:
    python run_hmr.py make-asset                                   # Write the toy body asset
    python run_hmr.py make-data --out data/synth                   # Generate the synthetic dataset
    python run_hmr.py train --data data/synth --out runs/full      # Train with every loss term
    python run_hmr.py train --data data/synth --config config/miniature.env --max-steps 50
    python run_hmr.py eval --checkpoint runs/full/final.pt --data data/synth
    python run_hmr.py render-views --checkpoint runs/full/final.pt --image person.png --angles 0 90 180 270
    python run_hmr.py esv --checkpoint runs/full/final.pt --data data/synth --limit 50
    python run_hmr.py bench --checkpoint runs/full/final.pt --resolutions 1 2 4 6 --iters 1000
    python run_hmr.py ablate --data data/synth --variants reg reg+imag full --charts
"""

import argparse
import logging
import os
import sys

# Add src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.config import RENDER_RESOLUTIONS
from src.errors import MeshRecoveryError
from src.main import ABLATION_VARIANTS, DEFAULT_ABLATION, MeshRecoveryRunner
from src.utils.reporting import EXPORT_FORMATS

logger = logging.getLogger('run_hmr')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='FILE', help='KEY=value run config (see docs/CONFIG_SCHEMA.md)')
    common.add_argument('--seed', type=int, help='Override the config seed')
    common.add_argument('--out', default='runs/default', metavar='DIR', help='Output directory')
    common.add_argument('--asset', metavar='FILE', help='Body asset (.npz); default HMR_ASSET_PATH')
    common.add_argument('--charts', action='store_true', help='Also write plotly HTML charts')
    common.add_argument('--export', nargs='+', choices=EXPORT_FORMATS, default=['csv'],
                        help='Table formats for reports')
    common.add_argument('--quiet', action='store_true', help='Hide progress bars')

    parser = argparse.ArgumentParser(description='Feature-field human mesh recovery')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('make-asset', parents=[common], help='Write the procedural toy body asset')
    p.add_argument('--asset-seed', type=int, help='Seed of the toy body (default: config seed)')

    p = sub.add_parser('make-data', parents=[common], help='Generate the synthetic train/val dataset')
    p.add_argument('--manifest', metavar='FILE', help='Dataset manifest JSON')

    p = sub.add_parser('train', parents=[common], help='Train end to end')
    p.add_argument('--data', required=True, metavar='PATH', help='Dataset directory or train split file')
    p.add_argument('--max-steps', type=int, metavar='N', help='Stop after N optimisation steps')

    p = sub.add_parser('eval', parents=[common], help='MPJPE / PA-MPJPE / PVE at the canonical view')
    p.add_argument('--checkpoint', required=True, metavar='FILE')
    p.add_argument('--data', required=True, metavar='PATH')
    p.add_argument('--split', default='val', choices=['train', 'val'])

    p = sub.add_parser('render-views', parents=[common], help='Mesh and silhouette per viewing direction')
    p.add_argument('--checkpoint', required=True, metavar='FILE')
    p.add_argument('--image', required=True, metavar='FILE')
    p.add_argument('--angles', type=float, nargs='+', default=[0.0, 90.0, 180.0, 270.0], metavar='DEG')

    p = sub.add_parser('esv', parents=[common], help='Shape/viewing-direction entanglement')
    p.add_argument('--checkpoint', required=True, metavar='FILE')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--data', metavar='PATH')
    source.add_argument('--image', metavar='FILE')
    p.add_argument('--split', default='val', choices=['train', 'val'])
    p.add_argument('--step-deg', type=float, default=1.0)
    p.add_argument('--limit', type=int, metavar='N', help='Use the first N images of the split')

    p = sub.add_parser('bench', parents=[common], help='Inference fps per rendering resolution')
    p.add_argument('--checkpoint', required=True, metavar='FILE')
    p.add_argument('--resolutions', type=int, nargs='+', default=list(RENDER_RESOLUTIONS),
                   choices=RENDER_RESOLUTIONS)
    p.add_argument('--iters', type=int, metavar='N', help='Timed iterations (default: BENCH_ITERS)')
    p.add_argument('--warmup', type=int, metavar='N', help='Untimed iterations (default: BENCH_WARMUP)')

    p = sub.add_parser('ablate', parents=[common], help='Train and compare loss/architecture variants')
    p.add_argument('--data', required=True, metavar='PATH')
    p.add_argument('--variants', nargs='+', default=list(DEFAULT_ABLATION), choices=sorted(ABLATION_VARIANTS))
    p.add_argument('--max-steps', type=int, metavar='N')
    p.add_argument('--esv-limit', type=int, default=20, metavar='N')
    return parser


def run(args: argparse.Namespace) -> None:
    runner = MeshRecoveryRunner(args.config, args.seed, args.out, charts=args.charts,
                                export_formats=args.export, show_progress=not args.quiet)

    if args.command == 'make-asset':
        path = runner.cmd_make_asset(args.asset, args.asset_seed)
        print(f"Body asset written to {path}")
    elif args.command == 'make-data':
        paths = runner.cmd_make_data(args.asset, args.manifest)
        for split, path in paths.items():
            print(f"{split}: {path}")
    elif args.command == 'train':
        result = runner.cmd_train(args.data, args.asset, max_steps=args.max_steps)
        print(f"Trained {result.steps} steps, final loss {result.final_loss:.6f}")
    elif args.command == 'eval':
        report = runner.cmd_eval(args.checkpoint, args.data, args.split, args.asset)
        print(f"MPJPE {report.mpjpe:.4f}  PA-MPJPE {report.pa_mpjpe:.4f}  PVE {report.pve:.4f}")
    elif args.command == 'render-views':
        views = runner.cmd_render_views(args.checkpoint, args.image, args.angles, args.asset)
        print(f"Wrote {len(views)} views to {args.out}")
    elif args.command == 'esv':
        report = runner.cmd_esv(args.checkpoint, args.data, args.image, args.split, args.step_deg,
                                args.limit, args.asset)
        print(f"ESV {report.esv:.6f}")
    elif args.command == 'bench':
        for row in runner.cmd_bench(args.checkpoint, args.resolutions, args.iters, args.warmup):
            print(f"res {row.resolution}: {row.fps:.1f} fps ({row.ms_per_image:.3f} ms/image)")
    elif args.command == 'ablate':
        for row in runner.cmd_ablate(args.data, args.variants, args.asset, args.max_steps,
                                     esv_limit=args.esv_limit):
            print(f"{row['variant']}: MPJPE {row['mpjpe']:.4f}  ESV {row['esv']:.6f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except MeshRecoveryError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\nOperation cancelled by user", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
