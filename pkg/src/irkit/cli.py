"""Command-line front end.

Verbs: indices, ingest, split, train, eval, predict, explain, report and
serve. Exit status is 0 on success, 1 on a runtime failure (bad data,
missing files, undefined metrics) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import dataset as ds
from . import explain as explain_mod
from . import harness, indices, interface, metrics, synth
from .errors import IrkitError

_SOURCES = {"nhanes": ds.Source.NHANES, "charls": ds.Source.CHARLS}


def _add_csv_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--csv", required=True, help="participant CSV path")
    p.add_argument("--source", choices=sorted(_SOURCES), default="nhanes")


def _load_records(args) -> list[ds.ParticipantRecord]:
    records, report = ds.parse_csv(args.csv, _SOURCES[args.source])
    if report.rows_flagged:
        print(
            f"note: {report.rows_flagged} rows had cells dropped at parse",
            file=sys.stderr,
        )
    return records


def _write_or_print(payload: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        print(payload)


# ---------------------------------------------------------------------------
# verbs


def cmd_indices(args) -> int:
    records = _load_records(args)
    lines = ["id,homa_ir,homa_positive,tyg,tyg_positive,mets_ir,mets_positive"]
    for rec in records:
        cells = [rec.id]
        specs = [
            (indices.homa_ir, (indices.glucose_mgdl_to_mmol(rec.fpg), rec.insulin))
            if rec.fpg is not None and rec.insulin is not None
            else None,
            (indices.tyg, (rec.tg, rec.fpg))
            if rec.tg is not None and rec.fpg is not None
            else None,
            (indices.mets_ir, (rec.fpg, rec.tg, rec.bmi, rec.hdl))
            if None not in (rec.fpg, rec.tg, rec.bmi, rec.hdl)
            else None,
        ]
        for spec in specs:
            if spec is None:
                cells += ["", ""]
                continue
            fn, params = spec
            value = fn(*params)
            cells += [repr(value.value), str(int(indices.classify(value).positive))]
        lines.append(",".join(cells))
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def cmd_ingest(args) -> int:
    records, report = ds.parse_csv(args.csv, _SOURCES[args.source])
    payload = dict(report.to_dict(), records=len(records))
    _write_or_print(json.dumps(payload, indent=2, sort_keys=True), args.out)
    return 0


def cmd_split(args) -> int:
    records = _load_records(args)
    task = ds.Task(args.task)
    mask = harness._MASKS[args.mask]
    kept, excl = ds.apply_exclusions(records, task, mask)
    assignment = ds.split(kept, seed=args.seed)
    assignment.write_manifest(args.out)
    print(json.dumps({"excluded": excl.counts, "splits": assignment.counts()}))
    return 0


def cmd_train(args) -> int:
    records = []
    if args.csv:
        records, _ = ds.parse_csv(args.csv, _SOURCES[args.source])
    if args.external_csv:
        ext, _ = ds.parse_csv(args.external_csv, ds.Source.CHARLS)
        records += ext
    if args.synth:
        records += synth.generate_cohort(
            args.synth, seed=args.synth_seed, source=ds.Source.NHANES
        )
    if args.synth_external:
        records += synth.generate_cohort(
            args.synth_external, seed=args.synth_seed + 1, source=ds.Source.CHARLS
        )
    if not records:
        raise IrkitError("no input data: pass --csv and/or --synth N")
    settings = (
        harness.settings_from_mapping(harness.read_config_file(args.config))
        if args.config
        else harness.ExperimentSettings()
    )
    results = harness.run_experiment(records, args.outdir, settings)
    if args.bundles:
        written = interface.export_bundles(results, args.bundles)
        print(f"wrote {len(written)} bundles under {args.bundles}")
    print(f"artifacts under {args.outdir}")
    return 0


def _eval_frame(args):
    """Shared loader for eval/predict/explain: bundle plus encodable rows."""
    bundle = interface.load_bundle(args.bundle)
    records = _load_records(args)
    task = bundle.fitted.task
    kept, _ = ds.apply_exclusions(records, task, bundle.fitted.encoder.mask)
    if not kept:
        raise IrkitError("no records remain after exclusions")
    batch = bundle.fitted.encoder.encode_batch(kept)
    return bundle, kept, batch


def cmd_eval(args) -> int:
    bundle, kept, batch = _eval_frame(args)
    task = bundle.fitted.task
    preds = bundle.fitted.predict_encoded(batch)
    y = ds.target_array(kept, task)
    if task.is_classification:
        report = metrics.classification_report(preds, y.astype(bool))
    else:
        report = metrics.regression_report(preds, y)
    _write_or_print(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0


def cmd_predict(args) -> int:
    bundle, kept, batch = _eval_frame(args)
    preds = bundle.fitted.predict_encoded(batch)
    lines = ["id,prediction"]
    lines += [f"{rid},{float(p)!r}" for rid, p in zip(batch.ids, preds)]
    _write_or_print("\n".join(lines) + "\n", args.out)
    return 0


def cmd_explain(args) -> int:
    bundle, kept, batch = _eval_frame(args)
    if bundle.background is None:
        raise IrkitError("bundle has no background sample; re-export bundles")
    if args.id not in batch.ids:
        raise IrkitError(f"id {args.id!r} not found among encodable records")
    instance = batch.take([batch.ids.index(args.id)])
    att = explain_mod.shapley_sampling(
        bundle.fitted,
        instance,
        bundle.background,
        n_permutations=args.permutations,
        seed=args.seed,
    )
    _write_or_print(json.dumps(att.to_dict(), indent=2, sort_keys=True), args.out)
    return 0


def cmd_report(args) -> int:
    path = f"{args.outdir}/report.md"
    try:
        with open(path, encoding="utf-8") as fh:
            print(fh.read())
    except FileNotFoundError:
        raise IrkitError(f"no report at {path}; run train first") from None
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    app = interface.create_app(args.bundles)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irkit", description="insulin resistance modelling toolkit"
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("indices", help="surrogate index values per row")
    _add_csv_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_indices)

    p = sub.add_parser("ingest", help="parse a CSV and report data quality")
    _add_csv_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="write a train/val/test manifest")
    _add_csv_args(p)
    p.add_argument("--task", choices=[t.value for t in ds.Task], required=True)
    p.add_argument("--mask", choices=("full", "simplified"), default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="run the model-by-task experiment matrix")
    p.add_argument("--csv")
    p.add_argument("--source", choices=sorted(_SOURCES), default="nhanes")
    p.add_argument("--external-csv")
    p.add_argument("--synth", type=int, default=0, help="also synthesize N rows")
    p.add_argument("--synth-external", type=int, default=0)
    p.add_argument("--synth-seed", type=int, default=0)
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--outdir", required=True)
    p.add_argument("--bundles", help="also export serving bundles here")
    p.set_defaults(func=cmd_train)

    for verb, fn, extra in (
        ("eval", cmd_eval, "score a bundle against labelled rows"),
        ("predict", cmd_predict, "write per-row predictions"),
        ("explain", cmd_explain, "attribute one row's prediction"),
    ):
        p = sub.add_parser(verb, help=extra)
        p.add_argument("--bundle", required=True)
        _add_csv_args(p)
        if verb == "explain":
            p.add_argument("--id", required=True)
            p.add_argument("--permutations", type=int, default=128)
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        p.set_defaults(func=fn)

    p = sub.add_parser("report", help="print the experiment report")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve bundles over HTTP")
    p.add_argument("--bundles", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IrkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
