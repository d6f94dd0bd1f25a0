"""Record HTTP fixtures for the web UI test suite.

Trains a small bundle set on synthetic data (full and simplified feature
masks), then captures exact response bytes from the live service routes
into frontend/test/fixtures/. The UI tests replay those bytes through a
mock fetch, so rerunning this script refreshes them against the current
service behaviour.
"""

import argparse
import shutil
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from irkit import dataset as ds
from irkit import harness, interface, synth

TASKS = "homa_class,tyg_class,mets_class,mets_regress"

FEATURES = {
    "age": 52,
    "bmi": 31.2,
    "waist": 104,
    "pulse": 76,
    "systolic": 128,
    "diastolic": 82,
    "fpg": 112,
    "sex": "female",
    "race": "non_hispanic_white",
}


def build_bundles(root: Path, workdir: Path, seed: int, n: int) -> None:
    records = synth.generate_cohort(n, seed=seed, source=ds.Source.NHANES)
    records += synth.generate_cohort(n // 5, seed=seed + 1, source=ds.Source.CHARLS)
    base = {
        "seed": str(seed),
        "tasks": TASKS,
        "models": "gbdt_ordered",
        "gbdt.n_trees": "120",
    }
    full = harness.settings_from_mapping(base)
    interface.export_bundles(
        harness.run_experiment(records, workdir / "full", full), root
    )
    simple = harness.settings_from_mapping({**base, "mask": "simplified"})
    staged = workdir / "simple_bundles"
    for written in interface.export_bundles(
        harness.run_experiment(records, workdir / "simple", simple), staged
    ):
        src = Path(written)
        shutil.copytree(src, root / (src.name + "__simplified"))


def record(client: TestClient, out: Path) -> None:
    grid = [70 + i * 50 / 49 for i in range(50)]

    def save(name: str, response) -> None:
        (out / name).write_bytes(response.content)
        print(f"{name}: status {response.status_code}, {len(response.content)} bytes")

    save("health.json", client.get("/health"))
    save("models.json", client.get("/models"))
    for task in TASKS.split(","):
        save(
            f"predict_{task}.json",
            client.post(
                "/predict",
                json={"model": f"{task}__gbdt_ordered", "features": FEATURES},
            ),
        )
    save(
        "predict_mets_regress_simplified.json",
        client.post(
            "/predict",
            json={
                "model": "mets_regress__gbdt_ordered__simplified",
                "features": {"bmi": 31.2, "fpg": 112},
            },
        ),
    )
    save(
        "whatif_waist.json",
        client.post(
            "/whatif",
            json={
                "model": "mets_regress__gbdt_ordered",
                "features": FEATURES,
                "feature": "waist",
                "values": grid,
            },
        ),
    )
    save(
        "whatif_waist_alt.json",
        client.post(
            "/whatif",
            json={
                "model": "mets_regress__gbdt_ordered",
                "features": {**FEATURES, "bmi": 24.5},
                "feature": "waist",
                "values": grid,
            },
        ),
    )
    save(
        "explain_mets_class.json",
        client.post(
            "/explain",
            json={
                "model": "mets_class__gbdt_ordered",
                "features": FEATURES,
                "n_permutations": 128,
                "seed": 0,
            },
        ),
    )
    save(
        "error_422_bmi.json",
        client.post(
            "/predict",
            json={
                "model": "mets_class__gbdt_ordered",
                "features": {**FEATURES, "bmi": 500},
            },
        ),
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parent.parent / "frontend/test/fixtures",
    )
    ap.add_argument("--seed", type=int, default=20240817)
    ap.add_argument("--n-synth", type=int, default=1200)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        bundles = workdir / "bundles"
        build_bundles(bundles, workdir, args.seed, args.n_synth)
        client = TestClient(interface.create_app(bundles))
        record(client, args.out)


if __name__ == "__main__":
    main()
