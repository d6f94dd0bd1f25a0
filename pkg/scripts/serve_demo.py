"""Train a small demo model set on synthetic data and serve it over HTTP.

Bundles are cached under the chosen directory, so restarting the script
skips retraining. Point the web UI (frontend/) at the printed address.
"""

import argparse
import shutil
from pathlib import Path

import uvicorn

from irkit import dataset as ds
from irkit import harness, interface, synth


def ensure_bundles(root: Path, seed: int, n: int) -> None:
    if root.exists() and any(root.glob("*/bundle.json")):
        print(f"reusing bundles under {root}")
        return
    records = synth.generate_cohort(n, seed=seed, source=ds.Source.NHANES)
    records += synth.generate_cohort(n // 5, seed=seed + 1, source=ds.Source.CHARLS)
    base = {
        "seed": str(seed),
        "tasks": "mets_class,mets_regress,tyg_class,homa_class",
        "models": "gbdt_ordered,linear",
        "gbdt.n_trees": "300",
        "train_classify.epochs": "8",
        "train_regress.optimizer": "adamw",
        "train_regress.lr": "1e-3",
        "train_regress.epochs": "8",
    }
    settings = harness.settings_from_mapping(base)
    results = harness.run_experiment(records, root / "_artifacts", settings)
    interface.export_bundles(results, root)

    # the web UI's reduced-input toggle needs bundles trained on bmi+fpg only
    simple = harness.settings_from_mapping({**base, "mask": "simplified"})
    simple_results = harness.run_experiment(
        records, root / "_artifacts_simplified", simple
    )
    staged = root / "_staged_simplified"
    for written in interface.export_bundles(simple_results, staged):
        src = Path(written)
        shutil.copytree(src, root / (src.name + "__simplified"))
    shutil.rmtree(staged)
    print(f"trained {len(results) + len(simple_results)} bundles under {root}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bundles", type=Path, default=Path("demo_bundles"))
    ap.add_argument("--seed", type=int, default=20240817)
    ap.add_argument("--n-synth", type=int, default=3000)
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8000)
    ap.add_argument(
        "--frontend",
        type=Path,
        default=None,
        help="directory with the built web UI (index.html + dist/); "
        "served at / alongside the API",
    )
    args = ap.parse_args()

    ensure_bundles(args.bundles, args.seed, args.n_synth)
    app = interface.create_app(args.bundles)
    if args.frontend is not None:
        from starlette.staticfiles import StaticFiles

        # mounted last so the API routes keep precedence
        app.mount("/", StaticFiles(directory=args.frontend, html=True), name="ui")
    print(f"serving on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")


if __name__ == "__main__":
    main()
