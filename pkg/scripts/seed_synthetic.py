#!/usr/bin/env python3
"""
Synthetic dataset seeding script
Writes a grid city with planted hotspots, its manifest and a matching config
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

# Add the project root to the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.config import ExperimentConfig, save_config
from ingest.writers import write_city
from risk.synthetic import generate_synthetic_city

logger = logging.getLogger(__name__)


def seed(out_dir: Path, regions: int, steps: int, hotspots: int, seed_value: int, interval: int) -> Path:
    """Write the dataset under out_dir/data and a ready-to-train config under out_dir."""
    city = generate_synthetic_city(regions, steps, hotspots, seed_value, interval_hours=interval)
    manifest = write_city(city, out_dir / "data")
    (out_dir / "data" / "synthetic_metadata.json").write_text(json.dumps(city.metadata, indent=2), encoding="utf-8")

    config = ExperimentConfig(
        dataset_path=str(manifest),
        output_dir=str(out_dir / "run"),
        interval_hours=interval,
        seed=seed_value,
        k=min(40, regions),
        k_members=min(40, regions),
    )
    config_path = save_config(config, out_dir / "config.json")
    print(f"Hotspots: {', '.join(city.metadata['hotspot_ids']) or '(none)'}")
    print(f"Events: {city.metadata['n_events']}")
    return config_path


def main():
    parser = argparse.ArgumentParser(description="Seed a synthetic accident dataset")
    parser.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    parser.add_argument("--regions", type=int, default=25)
    parser.add_argument("--steps", type=int, default=120)
    parser.add_argument("--hotspots", type=int, default=5)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--interval", type=int, default=24, choices=[12, 24])
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO)
    print("🌱 Seeding synthetic city...")
    config_path = seed(args.out, args.regions, args.steps, args.hotspots, args.seed, args.interval)
    print(f"✅ Done. Train with: python -m apps.cli train --config {config_path}")


if __name__ == "__main__":
    main()
