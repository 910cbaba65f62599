#!/usr/bin/env python3
"""
SF4 snapshot inspection tool
Reads snapshot files or whole archives written by bqlab.py simulate

Usage:
    python snapshot_info.py <snapshot.sf4> [header|norms]
    python snapshot_info.py <archive_dir> summary

Examples:
    python snapshot_info.py data/runs/fbcs_n32_seed20240517/snapshot_0000.sf4 header
    python snapshot_info.py data/runs/fbcs_n32_seed20240517/snapshot_0032.sf4 norms
    python snapshot_info.py data/runs/fbcs_n32_seed20240517 summary
"""

import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))

from core.archive import load_archive, read_snapshot
from core.config import load_run_config
from core.spaces import build_lp_partition, fbm_norm, sobolev_norm


def show_header(field):
    grid = field.grid
    print("=== SF4 HEADER ===")
    print(f"Grid: {grid.describe()}")
    print(f"Time: {field.time:.6f}")
    print(f"Real valued: {field.real_valued}")
    print(f"Max |coefficient|: {field.max_magnitude():.6e}")
    print(f"Divergence residual: {field.divergence_residual():.3e}")
    if field.real_valued:
        print(f"Conjugate asymmetry: {field.conjugate_asymmetry():.3e}")


def show_norms(field):
    config = load_run_config()
    norm = config.norm_params()
    partition = build_lp_partition(field.grid)
    print("=== NORMS ===")
    print(f"FN^s (s={norm.s:.4g}, q={norm.q}, mu={norm.mu}, r={norm.r}): "
          f"{fbm_norm(field, norm, partition):.6e}")
    print(f"L2: {sobolev_norm(field):.6e}")


def show_summary(directory):
    trajectory, manifest = load_archive(directory)
    print(f"=== ARCHIVE {manifest.get('run_id', os.path.basename(directory))} ===")
    print(f"Created: {manifest.get('created', '-')}")
    print(f"Grid: {trajectory.grid.describe()}")
    print(f"Snapshots: {len(trajectory)} (T = {trajectory.horizon:.4f})")
    contraction = manifest.get('contraction', {})
    if contraction:
        print(f"Converged: {contraction.get('converged')} after {len(contraction.get('iterates', []))} iterations")
        print(f"y_norm: {contraction.get('y_norm')}   final_norm: {contraction.get('final_norm')}")
    print(f"Max divergence residual: {trajectory.divergence_residual():.3e}")


def main():
    if len(sys.argv) < 2:
        print(__doc__)
        sys.exit(1)

    path = sys.argv[1]
    action = sys.argv[2].lower() if len(sys.argv) > 2 else ('summary' if os.path.isdir(path) else 'header')

    try:
        if action == 'summary':
            if not os.path.isdir(path):
                print("Error: 'summary' needs an archive directory")
                sys.exit(1)
            show_summary(path)
        elif action in ('header', 'norms'):
            field = read_snapshot(path)
            show_header(field)
            if action == 'norms':
                print()
                show_norms(field)
        else:
            print(f"Error: Unknown action '{action}'. Use: header, norms, or summary")
            sys.exit(1)
    except (OSError, ValueError) as e:
        print(f"❌ Could not read {path}: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
