#!/usr/bin/env python3
"""
Generate a corpus of random toy problems.

Each problem is a 5-10-10-1 ReLU network with N(0, 0.25) weights and
biases, redrawn until f(0) > 0, under input noise N(0, 0.1 I) with
eta = 0.95. Files are written as toy_XX.json plus toy_XX.model.json.
"""
import argparse
import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from app.services.benchmark_service import ProblemGenerationError, generate_toy_corpus


def main() -> int:
    parser = argparse.ArgumentParser(
        description="Generate random toy verification problems",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("out_dir", help="destination directory")
    parser.add_argument("--count", type=int, default=30, help="number of problems")
    parser.add_argument("--seed", type=int, default=0, help="generation seed")
    parser.add_argument("--widths", type=int, nargs="+", default=[5, 10, 10, 1], help="layer widths n_0 ... n_N")
    parser.add_argument("--weight-std", type=float, default=0.5)
    parser.add_argument("--noise-var", type=float, default=0.1)
    parser.add_argument("--eta", type=float, default=0.95)
    parser.add_argument("--z", type=float, default=3.0, help="truncation half-width in standard deviations")
    args = parser.parse_args()

    print(f"🎲 Generating {args.count} toy problems into {args.out_dir}...")
    problems = generate_toy_corpus(
        args.count,
        args.seed,
        out_dir=args.out_dir,
        widths=args.widths,
        weight_std=args.weight_std,
        noise_var=args.noise_var,
        eta=args.eta,
        truncation_z=args.z,
    )
    print(f"✅ Wrote {len(problems)} problems")
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except ProblemGenerationError as e:
        print(f"❌ Error during generation: {e}")
        sys.exit(1)
