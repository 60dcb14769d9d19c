"""Regenerate the reference robustness table.

Runs the two acceptance sweeps on a model (a 10 x 6 x 4 cm box surface when
--model is omitted) and writes reference_benchmark.csv / .json:

  * 5 deg noise, 30% outliers, no occlusion, M=128, scored at 2% of the diameter
  * 50% half-space occlusion, 5 deg noise, outliers in {0, 0.2, 0.4, 0.6}

plus the no-voting baseline (identity rotation placed at the scene centroid).

    python scripts/reference_benchmark.py --trials 1000 --threads 8
"""
import argparse
import logging
import sys

from keyvote3d.main import configure_logging
from keyvote3d.models.schemas import SynthConfig, VotingConfig
from keyvote3d.services.ply import load_ply
from keyvote3d.services.serialization import save_benchmark_csv, save_benchmark_json
from keyvote3d.services.synth import benchmark_sweep, centroid_baseline_accuracy, sample_box_surface

logger = logging.getLogger("reference_benchmark")

def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--model", help="model .ply (default: synthetic box surface)")
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", default="reference_benchmark.csv")
    args = parser.parse_args()
    configure_logging()

    model = load_ply(args.model) if args.model else sample_box_surface(5000)
    voting = VotingConfig(m_hypotheses=128)

    clean = SynthConfig(angular_noise_deg=5.0, outlier_fraction=0.3, occlusion_fraction=0.0)
    occluded = [
        SynthConfig(angular_noise_deg=5.0, outlier_fraction=f, occlusion_fraction=0.5)
        for f in (0.0, 0.2, 0.4, 0.6)
    ]

    rows = benchmark_sweep(model, [clean], args.trials, voting=voting, diameter_fraction=0.02, threads=args.threads)
    rows += benchmark_sweep(model, occluded, args.trials, voting=voting, threads=args.threads)

    save_benchmark_csv(rows, args.out)
    save_benchmark_json(rows, args.out.rsplit(".", 1)[0] + ".json")

    baseline = centroid_baseline_accuracy(model, occluded[0], min(args.trials, 200))

    print(f"no occlusion, 5 deg / 30% outliers: ADD < 2% diameter in {100 * rows[0].accuracy:.1f}% of trials")
    for row in rows[1:]:
        print(f"50% occlusion, {row.config.outlier_fraction:.0%} outliers: {100 * row.accuracy:.1f}%")
    print(f"baseline (no voting): {100 * baseline:.1f}%")

    monotone = all(a.accuracy + 0.01 >= b.accuracy for a, b in zip(rows[1:], rows[2:]))
    ok = rows[0].accuracy >= 0.95 and monotone and min(r.accuracy for r in rows[1:]) > baseline
    print("✅ reference criteria met" if ok else "❌ reference criteria NOT met")
    return 0 if ok else 1

if __name__ == "__main__":
    sys.exit(main())
