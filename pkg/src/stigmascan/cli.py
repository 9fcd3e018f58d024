"""Command-line front end: ``stigmascan <subcommand> [flags]``.

Stages communicate through files in ``--out-dir``:

    scan       labels.csv
    aggregate  note_flags.csv, patient_outcomes.csv, provider_outcomes.csv, manifest.json
    fit        fits.csv, mixed.csv, correlations.csv, fit_notes.txt, fit.stamp
    report     report.md, report_cells.csv
    train      classifier.model, eval_metrics.csv
    synth      the five input tables and ground_truth.jsonl
    all        scan, aggregate, fit and report in one go

Failures print one line ``error[<Code>]: <message>`` to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import errors
from .aggregate import (
    COUNTING_MODES,
    aggregate_notes,
    build_entity_outcomes,
    headline_totals,
    read_entity_outcomes,
    read_note_flags,
    write_entity_outcomes,
    write_note_flags,
)
from .analysis import (
    MODEL_MODES,
    ModelResults,
    read_correlations,
    read_fits,
    read_mixed,
    run_all_models,
    write_correlations,
    write_fits,
    write_mixed,
)
from .classifier import Hyperparams, evaluate, load_models, read_annotations, save_models, split_annotations, train
from .config import data_path
from .ingest import load_corpus, load_notes
from .lexicon import DOUBT, STIGMA, build_matcher, load_lexicon
from .manifest import RunManifest, build_manifest
from .report import build_descriptives, emit_report
from .scan import read_labels, scan_corpus, write_labels
from .synth import SynthConfig, generate

log = logging.getLogger("stigmascan")

TABLES = ("notes", "patients", "admissions", "caregivers", "diagnoses")
SUBCOMMANDS = ("scan", "train", "aggregate", "fit", "report", "synth", "all")


# -- argument parsing ------------------------------------------------------------


def _add_tables(p, required=TABLES):
    for t in TABLES:
        p.add_argument(f"--{t}", type=Path, required=t in required, help=f"{t} CSV")


def _add_lexicons(p):
    p.add_argument("--lexicon-stigma", type=Path, default=None, help="stigmatizing-label lexicon file")
    p.add_argument("--lexicon-doubt", type=Path, default=None, help="doubt-marker lexicon file")


def _add_common(p):
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stigmascan", description="Stigmatizing-language detection and modelling.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("scan", help="segment, match and classify note sentences")
    _add_tables(p, required=("notes",))
    _add_lexicons(p)
    p.add_argument("--classifier", default="off", help="model file, or 'off' for lexicon-only labels")
    p.add_argument("--threads", type=int, default=None, help="worker processes (env STIGMA_SCAN_THREADS)")
    _add_common(p)

    p = sub.add_parser("train", help="train classifiers from an annotated sample")
    p.add_argument("--annotations", type=Path, required=True, help="CSV: sentence,term,lexicon,gold_label,annotator")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--l2", type=float, default=Hyperparams.l2)
    p.add_argument("--window", type=int, default=Hyperparams.window_k)
    _add_common(p)

    p = sub.add_parser("aggregate", help="roll sentence labels up to patients and providers")
    _add_tables(p)
    _add_lexicons(p)
    p.add_argument("--labels", type=Path, default=None, help="labels CSV (default OUT_DIR/labels.csv)")
    p.add_argument("--classifier", default="off")
    p.add_argument("--counting-mode", choices=COUNTING_MODES, default="flagged_charts")
    p.add_argument("--model-mode", choices=MODEL_MODES, default="per_predictor")
    _add_common(p)

    p = sub.add_parser("fit", help="fit the Poisson, clustering and correlation models")
    p.add_argument("--model-mode", choices=MODEL_MODES, default=None, help="override the manifest's model mode")
    p.add_argument("--quadrature-points", type=int, default=15)
    _add_common(p)

    p = sub.add_parser("report", help="render markdown and CSV tables")
    _add_common(p)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--config", type=Path, default=None, help="key = value settings file")
    p.add_argument("--n-patients", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("all", help="scan, aggregate, fit and report")
    _add_tables(p)
    _add_lexicons(p)
    p.add_argument("--classifier", default="off")
    p.add_argument("--counting-mode", choices=COUNTING_MODES, default="flagged_charts")
    p.add_argument("--model-mode", choices=MODEL_MODES, default="per_predictor")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--quadrature-points", type=int, default=15)
    _add_common(p)
    return parser


# -- stages ----------------------------------------------------------------------


def _lexicon_paths(args):
    return {
        STIGMA: args.lexicon_stigma or data_path("stigmatizing_labels.txt"),
        DOUBT: args.lexicon_doubt or data_path("doubt_markers.txt"),
    }


def _classifier_path(args):
    return None if str(args.classifier).lower() == "off" else Path(args.classifier)


def cmd_scan(args) -> Path:
    paths = _lexicon_paths(args)
    matcher = build_matcher([load_lexicon(paths[STIGMA], STIGMA), load_lexicon(paths[DOUBT], DOUBT)])
    model_path = _classifier_path(args)
    models = load_models(model_path) if model_path else None
    corpus = load_notes(args.notes)
    for line in corpus.report.lines():
        log.info(line)
    labels = scan_corpus(corpus, matcher, models, args.threads)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / "labels.csv"
    write_labels(out, labels)
    print(f"scan: {len(corpus.notes)} notes, {len(labels)} matches, "
          f"{sum(lb.positive for lb in labels)} positive -> {out}")
    return out


def cmd_train(args) -> Path:
    data = read_annotations(args.annotations)
    train_set, test_set = split_annotations(data, args.test_fraction, args.seed)
    hp = Hyperparams(window_k=args.window, l2=args.l2, seed=args.seed)
    models = []
    rows = []
    for name in sorted({a.lexicon_name for a in data}):
        model = train(train_set, name, hp)
        models.append(model)
        held = [a for a in test_set if a.lexicon_name == name]
        if held:
            m = evaluate(model, held)
            rows.append({"lexicon": name, **asdict(m), "degenerate": ";".join(m.degenerate)})
            print(f"train: {name} accuracy={m.accuracy:.3f} precision={m.precision:.3f} "
                  f"recall={m.recall:.3f} macro_f1={m.macro_f1:.3f} (n_test={len(held)})")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / "classifier.model"
    save_models(out, models)
    if rows:
        with open(args.out_dir / "eval_metrics.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    print(f"train: {len(models)} model(s) -> {out}")
    return out


def cmd_aggregate(args) -> RunManifest:
    corpus = load_corpus(*(getattr(args, t) for t in TABLES))
    for line in corpus.report.lines():
        log.info(line)
    labels_path = args.labels or args.out_dir / "labels.csv"
    labels = read_labels(labels_path)
    flags = aggregate_notes(corpus, labels)
    manifest = build_manifest({t: getattr(args, t) for t in TABLES}, _lexicon_paths(args), args.counting_mode,
                              args.model_mode, _classifier_path(args), args.seed)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_note_flags(out / "note_flags.csv", flags)
    for level in ("patient", "provider"):
        outcomes, report = build_entity_outcomes(corpus, flags, level, args.counting_mode)
        for line in report.lines():
            log.info(line)
        write_entity_outcomes(out / f"{level}_outcomes.csv", outcomes)
    manifest.write(out / "manifest.json")
    (out / "aggregate.stamp").write_text(manifest.data_digest + "\n", encoding="utf-8")
    print(f"aggregate: {len(flags)} notes -> {out}")
    return manifest


def _read_stamp(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8").strip()
    except FileNotFoundError as exc:
        raise errors.ManifestMismatch(f"{path} missing; run the earlier stage first") from exc


def _load_manifest(out_dir) -> RunManifest:
    path = Path(out_dir) / "manifest.json"
    if not path.exists():
        raise errors.ManifestMismatch(f"{path} missing; run 'aggregate' first")
    return RunManifest.read(path)


def cmd_fit(args) -> ModelResults:
    out = args.out_dir
    manifest = _load_manifest(out)
    if _read_stamp(out / "aggregate.stamp") != manifest.data_digest:
        raise errors.ManifestMismatch("aggregate outputs do not belong to manifest.json")
    if args.model_mode and args.model_mode != manifest.model_mode:
        manifest = replace(manifest, model_mode=args.model_mode)
        manifest.write(out / "manifest.json")
    patients = read_entity_outcomes(out / "patient_outcomes.csv")
    providers = read_entity_outcomes(out / "provider_outcomes.csv")
    flags = read_note_flags(out / "note_flags.csv")
    results = run_all_models(patients, providers, flags, [e.entity_id for e in patients],
                             [e.entity_id for e in providers], manifest.counting_mode, manifest.model_mode,
                             args.quadrature_points, manifest.digest)
    write_fits(out / "fits.csv", results.fits)
    write_mixed(out / "mixed.csv", results.mixed)
    write_correlations(out / "correlations.csv", results.correlations)
    (out / "fit_notes.txt").write_text("".join(n + "\n" for n in results.notes), encoding="utf-8")
    (out / "fit.stamp").write_text(manifest.digest + "\n", encoding="utf-8")
    for m in results.mixed:
        print(f"fit: {m.entity_level} {m.outcome} sigma2={m.sigma2:.4g} median_irr={m.median_irr:.4g}")
    for c in results.correlations:
        print(f"fit: {c.entity_level} spearman rho={c.rho:.4f} p={c.p:.3g} n={c.n}")
    print(f"fit: {len(results.fits)} rate-ratio rows -> {out}")
    return results


def cmd_report(args) -> Path:
    out = args.out_dir
    manifest = _load_manifest(out)
    if _read_stamp(out / "aggregate.stamp") != manifest.data_digest:
        raise errors.ManifestMismatch("aggregate outputs do not belong to manifest.json")
    notes_path = out / "fit_notes.txt"
    results = ModelResults(
        read_fits(out / "fits.csv"),
        read_mixed(out / "mixed.csv"),
        read_correlations(out / "correlations.csv"),
        notes_path.read_text(encoding="utf-8").splitlines() if notes_path.exists() else [],
        _read_stamp(out / "fit.stamp"),
    )
    patients = read_entity_outcomes(out / "patient_outcomes.csv")
    providers = read_entity_outcomes(out / "provider_outcomes.csv")
    descriptives = build_descriptives(patients, providers, manifest.digest)
    headline = headline_totals(read_note_flags(out / "note_flags.csv"))
    paths = emit_report(descriptives, results, manifest, headline).write(out)
    print(f"report: {paths['report']} and {paths['cells']}")
    return paths["report"]


def cmd_synth(args) -> Path:
    cfg = SynthConfig.from_file(args.config) if args.config else SynthConfig()
    cfg.seed = args.seed if args.seed is not None else cfg.seed
    if args.n_patients is not None:
        cfg.n_patients = args.n_patients
    paths = generate(cfg, args.out_dir)
    print(f"synth: {cfg.n_patients} patients -> {args.out_dir}")
    return paths["notes"]


def cmd_all(args) -> Path:
    cmd_scan(args)
    args.labels = None
    cmd_aggregate(args)
    args.model_mode = None
    cmd_fit(args)
    return cmd_report(args)


COMMANDS = {"scan": cmd_scan, "train": cmd_train, "aggregate": cmd_aggregate, "fit": cmd_fit,
            "report": cmd_report, "synth": cmd_synth, "all": cmd_all}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except errors.StigmaScanError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error[FileNotFound]: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error[{type(exc).__name__}]: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
