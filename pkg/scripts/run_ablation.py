"""Run the desk-scale ablation (full vs A1 vs A3) and print per-seed and mean metrics."""
import argparse
import json

from qcfd.experiments import METRICS, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--beats", type=int, default=512)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--json", help="also write the full result to this path")
    args = parser.parse_args()

    result = run_experiment(seeds=range(args.seeds), n_beats=args.beats, epochs=args.epochs)
    print("variant," + ",".join(METRICS))
    for variant, means in result["means"].items():
        print(variant + "," + ",".join(f"{means[m]:.4f}" for m in METRICS))
    print(f"# {args.seeds} seeds in {result['seconds']:.1f} s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=2)


if __name__ == "__main__":
    main()
