"""Run the full model-by-task matrix and write evaluation artifacts.

Without --csv this synthesizes a cohort first, so the whole pipeline runs
from a clean checkout. The default network budget keeps the deep models
tractable on a laptop; pass --config to override any setting.
"""

import argparse
from pathlib import Path

from irkit import dataset as ds
from irkit import harness, interface, synth


def default_settings(seed: int) -> harness.ExperimentSettings:
    return harness.settings_from_mapping(
        {
            "seed": str(seed),
            "gbdt.n_trees": "400",
            "forest.n_trees": "150",
            "train_classify.epochs": "10",
            "train_classify.patience": "3",
            "train_regress.optimizer": "adamw",
            "train_regress.lr": "1e-3",
            "train_regress.epochs": "10",
            "train_regress.patience": "3",
        }
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--csv", type=Path, help="home cohort CSV; synthesized if omitted")
    ap.add_argument("--external-csv", type=Path)
    ap.add_argument("--n-synth", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=20240817)
    ap.add_argument("--config", type=Path, help="key = value overrides")
    ap.add_argument("--outdir", type=Path, default=Path("artifacts"))
    ap.add_argument("--bundles", type=Path, help="also export serving bundles")
    args = ap.parse_args()

    if args.csv:
        records, _ = ds.parse_csv(args.csv, ds.Source.NHANES)
    else:
        records = synth.generate_cohort(
            args.n_synth, seed=args.seed, source=ds.Source.NHANES
        )
    if args.external_csv:
        ext, _ = ds.parse_csv(args.external_csv, ds.Source.CHARLS)
        records += ext
    else:
        records += synth.generate_cohort(
            max(args.n_synth // 5, 50), seed=args.seed + 1, source=ds.Source.CHARLS
        )

    if args.config:
        settings = harness.settings_from_mapping(harness.read_config_file(args.config))
    else:
        settings = default_settings(args.seed)

    results = harness.run_experiment(records, args.outdir, settings)
    if args.bundles:
        interface.export_bundles(results, args.bundles)
        print(f"bundles under {args.bundles}")
    print(f"artifacts under {args.outdir}; see {args.outdir / 'report.md'}")


if __name__ == "__main__":
    main()
