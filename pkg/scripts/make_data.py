"""Write synthetic home and external cohort CSVs for experiments."""

import argparse
from pathlib import Path

from irkit import dataset as ds
from irkit import synth


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-home", type=int, default=5000)
    ap.add_argument("--n-external", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240817)
    ap.add_argument("--dirty-fraction", type=float, default=0.05,
                    help="share of rows that should fail exclusions")
    ap.add_argument("--outdir", type=Path, default=Path("data"))
    args = ap.parse_args()

    args.outdir.mkdir(parents=True, exist_ok=True)
    home = synth.generate_cohort(
        args.n_home, seed=args.seed, source=ds.Source.NHANES,
        dirty_fraction=args.dirty_fraction,
    )
    external = synth.generate_cohort(
        args.n_external, seed=args.seed + 1, source=ds.Source.CHARLS,
        dirty_fraction=args.dirty_fraction,
    )
    synth.write_cohort_csv(home, args.outdir / "home.csv", ds.Source.NHANES)
    synth.write_cohort_csv(external, args.outdir / "external.csv", ds.Source.CHARLS)
    print(f"wrote {len(home)} home rows and {len(external)} external rows "
          f"under {args.outdir}")


if __name__ == "__main__":
    main()
