"""Command-line pipeline: ingest, features, train, predict, cv, explain, xai-eval,
render, analyze, synth and pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
A ``--config`` JSON file supplies defaults for any flag (keys are flag names
with dashes or underscores); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, MeterXAIError, NumericError

log = logging.getLogger("meterxai")

DEFAULT_SEED = 0
SCHEMES = ("hourly", "tod48", "tod24", "slots")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# helpers -------------------------------------------------------------------


def _open_read(path, binary=False):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {p}")
    return open(p, "rb") if binary else open(p, encoding="utf-8", newline="")


def _open_write(path, binary=False):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return open(p, "wb") if binary else open(p, "w", encoding="utf-8", newline="")


def _date(s: str) -> dt.date:
    try:
        return dt.date.fromisoformat(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {s!r}") from None


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _scheme(name: str):
    from .attribution import SegmentScheme

    return {
        "hourly": SegmentScheme.hourly_by_day,
        "tod48": lambda: SegmentScheme.time_of_day(48),
        "tod24": lambda: SegmentScheme.time_of_day(24),
        "slots": SegmentScheme.slots,
    }[name]()


def _load_profiles(args, with_labels: bool):
    from .meter import attach_labels, parse_labels, parse_readings

    with _open_read(args.readings) as fh:
        profiles = parse_readings(fh, format=args.format, cer_epoch=args.cer_epoch)
    if with_labels:
        with _open_read(args.labels) as fh:
            labels = parse_labels(fh)
        profiles = attach_labels(profiles, labels)
    return profiles


def _weeks_by_meter(profiles, threshold):
    from .meter import segment_weeks

    return {p.meter_id: segment_weeks(p, threshold) for p in profiles}


def _label_of(profile, characteristic):
    if characteristic not in profile.labels:
        raise DataError(f"meter {profile.meter_id} has no label for {characteristic!r}")
    return bool(profile.labels[characteristic])


def _pick_week(weeks, meter, week_start, latest):
    if not weeks:
        raise DataError(f"meter {meter} has no complete week")
    if latest or week_start is None:
        return weeks[-1]
    for w in weeks:
        if w.week_start == week_start:
            return w
    raise DataError(f"meter {meter} has no week starting {week_start}")


def _background(kind, weeks, all_weeks):
    from .attribution import household_background

    if kind == "household":
        return household_background(weeks)
    return household_background(all_weeks)


def _explain(method, model_fn, week, scheme, background, seed, n_coalitions, n_perturbations):
    from .attribution import explain_kernel_shap, explain_lime

    if method == "shap":
        return explain_kernel_shap(model_fn, week.values, scheme, background, n_coalitions=n_coalitions, seed=seed)
    return explain_lime(model_fn, week.values, scheme, n_perturbations, None, seed, background)


# subcommands ---------------------------------------------------------------


def cmd_ingest(args):
    from .meter import write_labels, write_readings

    profiles = _load_profiles(args, with_labels=args.labels is not None)
    weeks = _weeks_by_meter(profiles, args.completeness)
    out = Path(args.out)
    with _open_write(out / "readings.csv") as fh:
        write_readings(profiles, fh)
    if args.labels is not None:
        with _open_write(out / "labels.csv") as fh:
            write_labels({p.meter_id: p.labels for p in profiles}, fh)
    summary = {
        "households": len(profiles),
        "readings": int(sum(len(p) for p in profiles)),
        "weeks": {m: [w.week_start.isoformat() for w in ws] for m, ws in sorted(weeks.items())},
    }
    with _open_write(out / "ingest_summary.json") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{summary['households']} households, {sum(len(w) for w in weeks.values())} complete weeks")


def cmd_features(args):
    from .features import export_feature_matrix, feature_matrix, FeatureVector

    profiles = _load_profiles(args, with_labels=args.labels is not None)
    weeks = _weeks_by_meter(profiles, args.completeness)
    if args.labels is not None:
        # each characteristic keeps only the households labelled for it, so week counts differ per target
        unlabelled = [p.meter_id for p in profiles if args.characteristic not in p.labels]
        if unlabelled:
            log.warning("skipping %d meters without a %r label", len(unlabelled), args.characteristic)
        profiles = [p for p in profiles if args.characteristic in p.labels]
    rows, values = [], []
    for p in profiles:
        label = _label_of(p, args.characteristic) if args.labels is not None else None
        for w in weeks[p.meter_id]:
            rows.append((p.meter_id, w.week_start, label))
            values.append(w.values)
    if not values:
        raise DataError("no complete weeks in the input")
    X = feature_matrix(np.array(values))
    with _open_write(args.out) as fh:
        export_feature_matrix(((FeatureVector(m, ws, x), lab) for (m, ws, lab), x in zip(rows, X)), fh)
    print(f"{X.shape[0]} weeks x {X.shape[1]} features -> {args.out}")


def _read_features(path, need_labels=True):
    from .features import read_feature_matrix

    with _open_read(path) as fh:
        vectors, labels = read_feature_matrix(fh)
    if not vectors:
        raise DataError(f"{path}: no rows")
    X = np.array([v.values for v in vectors])
    if need_labels:
        if any(lab is None for lab in labels):
            raise DataError(f"{path}: unlabeled rows present")
        return vectors, X, np.array(labels, dtype=bool)
    return vectors, X, labels


def cmd_train(args):
    from .features import FEATURE_NAMES
    from .forest import save_model, train_forest

    _, X, y = _read_features(args.features)
    model = train_forest(
        X, y, n_trees=args.n_trees, max_depth=args.max_depth, min_leaf=args.min_leaf, seed=args.seed,
        n_jobs=args.threads, feature_names=FEATURE_NAMES, target=args.characteristic,
    )
    with _open_write(args.out, binary=True) as fh:
        save_model(model, fh)
    print(f"{model.n_trees} trees -> {args.out}")


def _load_model(path):
    from .forest import load_model

    with _open_read(path, binary=True) as fh:
        return load_model(fh)


def cmd_predict(args):
    import csv

    from .forest import predict_proba

    model = _load_model(args.model)
    vectors, X, _ = _read_features(args.features, need_labels=False)
    p = np.atleast_1d(predict_proba(model, X))
    with _open_write(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["meter_id", "week_start", "probability", "predicted"])
        for v, pi in zip(vectors, p):
            w.writerow([v.meter_id, v.week_start.isoformat(), repr(float(pi)), int(pi >= args.threshold)])
    print(f"{len(p)} predictions -> {args.out}")


def cmd_cv(args):
    from .forest import cross_validate

    vectors, X, y = _read_features(args.features)
    groups = np.array([v.meter_id for v in vectors]) if args.group_by_household else None
    rep = cross_validate(X, y, k=args.k, seed=args.seed, stratified=args.stratified, groups=groups,
                         n_jobs=args.threads, n_trees=args.n_trees)
    with _open_write(args.out) as fh:
        json.dump(rep.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"ACC {rep.acc:.3f}  AUC {rep.auc:.3f}")


def cmd_explain(args):
    from .attribution import forest_model_fn, write_attribution

    model = _load_model(args.model)
    profiles = _load_profiles(args, with_labels=False)
    weeks = _weeks_by_meter(profiles, args.completeness)
    if args.meter not in weeks:
        raise DataError(f"meter {args.meter!r} not in {args.readings}")
    week = _pick_week(weeks[args.meter], args.meter, args.week, args.latest)
    all_weeks = [w for ws in weeks.values() for w in ws]
    bg = _background(args.background, weeks[args.meter], all_weeks)
    attr = _explain(args.method, forest_model_fn(model), week, _scheme(args.scheme), bg, args.seed,
                    args.coalitions, args.perturbations)
    out = Path(args.out)
    with _open_write(out.with_suffix(".csv")) as fc, _open_write(out.with_suffix(".json")) as fj:
        write_attribution(attr, fc, fj)
    print(f"{args.meter} week {week.week_start}: p={attr.prediction:.3f} -> {out.with_suffix('.csv')}")


def cmd_xai_eval(args):
    from .attribution import forest_model_fn
    from .metrics import (
        faithfulness,
        kernel_shap_explainer,
        lime_explainer,
        random_explainer,
        stability,
        write_scores,
    )

    model = _load_model(args.model)
    profiles = _load_profiles(args, with_labels=False)
    dataset = {m: ws for m, ws in _weeks_by_meter(profiles, args.completeness).items() if ws}
    scheme = _scheme(args.scheme)
    makers = {
        "shap": lambda: kernel_shap_explainer(scheme, args.coalitions),
        "lime": lambda: lime_explainer(scheme, args.perturbations),
        "random": lambda: random_explainer(scheme),
    }
    fn = forest_model_fn(model)
    characteristic = model.target or args.characteristic
    rows = []
    for method in args.methods.split(","):
        if method not in makers:
            raise DataError(f"unknown method {method!r}; choose from {sorted(makers)}")
        ex = makers[method]()
        rows.append((method, characteristic, faithfulness(fn, ex, dataset, args.n_households, args.top_k, args.seed)))
        rows.append((method, characteristic, stability(fn, ex, dataset, args.n_households, args.top_k_per_day, args.seed)))
    with _open_write(args.out) as fh:
        write_scores(rows, fh)
    for method, _, s in rows:
        print(f"{method:<7}{s.metric:<14}{s.value:.3f}")


def cmd_render(args):
    from .attribution import forest_model_fn
    from .render import feedback_spec, render

    model = _load_model(args.model)
    profiles = _load_profiles(args, with_labels=False)
    weeks = _weeks_by_meter(profiles, args.completeness)
    if args.meter not in weeks:
        raise DataError(f"meter {args.meter!r} not in {args.readings}")
    week = _pick_week(weeks[args.meter], args.meter, args.week, args.latest)
    bg = _background(args.background, weeks[args.meter], [w for ws in weeks.values() for w in ws])
    attr = _explain("shap", forest_model_fn(model), week, _scheme("tod24"), bg, args.seed, args.coalitions, None)
    tip = None if args.tip == "none" else args.tip.upper()
    characteristic = model.target or args.characteristic
    spec = feedback_spec(args.viz, week.values, attr, characteristic, attr.prediction >= 0.5, args.caption, tip)
    with _open_write(args.out) as fh:
        fh.write(render(spec))
    print(f"{spec.viz_type} -> {args.out}")


def cmd_analyze(args):
    from .choice import (
        derive_reference_effect,
        encode_design,
        fit_logit,
        fit_ols_robust,
        format_table,
        read_choices,
        read_tasks,
        task_design,
        write_coef_csv,
    )

    out = Path(args.out)
    with _open_read(args.input) as fh:
        if args.what == "tasks":
            tasks = read_tasks(fh)
        else:
            records = read_choices(fh)
    texts = []
    if args.what == "tasks":
        visuals = tuple(dict.fromkeys(t.visual for t in tasks))
        if args.reference not in visuals:
            raise DataError(f"reference level {args.reference!r} not in data")
        X, names = task_design(tasks, args.reference, visuals)
        for outcome in args.outcomes.split(","):
            y = np.array([getattr(t, outcome) for t in tasks], dtype=float)
            fit = fit_ols_robust(X, y, names, cov_type=args.cov_type)
            with _open_write(out / f"ols_{outcome}.csv") as fc:
                write_coef_csv(fit, fc)
            texts.append(f"{outcome}\n{format_table(fit)}")
    else:
        visuals = tuple(dict.fromkeys(r.option.visual for r in records if not r.is_none))
        order = [v for v in ("no", "text", "line", "bar", "polar", "shap") if v in visuals]
        visuals = tuple(order + [v for v in visuals if v not in order])
        X, names = encode_design(records, args.scheme, args.reference, visuals, intercept=args.intercept)
        y = np.array([bool(r.chosen) for r in records], dtype=float)
        fit = fit_logit(X, y, names)
        ref = None
        if args.scheme == "effect":
            vis_cols = [j for j, n in enumerate(names) if n.startswith("Visual")]
            _, odds = derive_reference_effect(fit.params[vis_cols])
            from .choice import level_label

            ref = (f"Visual{level_label(args.reference)}", odds)
        with _open_write(out / "conjoint_logit.csv") as fc:
            write_coef_csv(fit, fc)
        texts.append(format_table(fit, ref))
    with _open_write(out / f"{args.what}_table.txt") as ft:
        ft.write("\n".join(texts))
    sys.stdout.write("\n".join(texts))


def cmd_synth(args):
    from .meter import write_labels, write_readings
    from .synth import SynthConfig, generate_households

    cfg_dict = dict(args.synth_config or {})
    for key in ("n_households", "weeks_per_household"):
        if getattr(args, key) is not None:
            cfg_dict[key] = getattr(args, key)
    cfg_dict["seed"] = args.seed
    try:
        cfg = SynthConfig.from_dict(cfg_dict)
    except TypeError as exc:
        raise DataError(f"bad synth config: {exc}") from None
    corpus = generate_households(cfg)
    out = Path(args.out)
    with _open_write(out / "readings.csv") as fh:
        write_readings(corpus.profiles, fh)
    with _open_write(out / "labels.csv") as fh:
        write_labels(corpus.labels(), fh)
    with _open_write(out / "manifest.json") as fh:
        fh.write(corpus.manifest_json() + "\n")
    print(f"{len(corpus.profiles)} households -> {out}")


def cmd_pipeline(args):
    """features -> cv -> train -> explain -> xai-eval -> render, plus a run manifest."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    common = dict(
        readings=args.readings, labels=args.labels, format=args.format, cer_epoch=args.cer_epoch,
        completeness=args.completeness, characteristic=args.characteristic, seed=args.seed, threads=args.threads,
    )
    ns = argparse.Namespace
    cmd_features(ns(**common, out=out / "features.csv"))
    cmd_cv(ns(features=out / "features.csv", k=args.k, seed=args.seed, stratified=False,
              group_by_household=args.group_by_household, threads=args.threads, n_trees=args.n_trees,
              out=out / "cv_report.json"))
    cmd_train(ns(features=out / "features.csv", n_trees=args.n_trees, max_depth=None, min_leaf=1, seed=args.seed,
                 threads=args.threads, characteristic=args.characteristic, out=out / "model.bin"))
    profiles = _load_profiles(ns(**common), with_labels=False)
    weeks = _weeks_by_meter(profiles, args.completeness)
    meter = args.meter or next((m for m in sorted(weeks) if weeks[m]), None)
    if meter is None:
        raise DataError("no household with a complete week")
    explain_args = dict(common, model=out / "model.bin", meter=meter, week=args.week, latest=args.week is None,
                        background=args.background, coalitions=args.coalitions, perturbations=args.perturbations)
    cmd_explain(ns(**explain_args, method="shap", scheme="hourly", out=out / "attribution_shap.csv"))
    cmd_xai_eval(ns(**common, model=out / "model.bin", scheme="hourly", coalitions=args.coalitions,
                    perturbations=args.perturbations, methods=args.methods,
                    n_households=min(args.n_households, sum(1 for ws in weeks.values() if ws)),
                    top_k=None, top_k_per_day=3, out=out / "xai_scores.csv"))
    for viz, suffix in (("line", "svg"), ("bar", "svg"), ("polar", "svg"), ("shap", "svg"), ("text", "txt")):
        cmd_render(ns(**explain_args, viz=viz, tip=args.tip, caption=args.caption, out=out / f"feedback_{viz}.{suffix}"))
    artifacts = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    inputs = {str(args.readings): sha256_file(args.readings), str(args.labels): sha256_file(args.labels)}
    manifest = {
        "version": __version__,
        "config": _jsonable(vars(args)),
        "seeds": {"seed": args.seed},
        "backend": _backend(),
        "inputs": inputs,
        "artifacts": {p.name: sha256_file(p) for p in artifacts},
    }
    with _open_write(out / "manifest.json") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"pipeline artifacts -> {out}")


def _backend():
    from ._kernels import BACKEND

    return BACKEND


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in sorted(d.items()):
        if k in ("func", "synth_config") or callable(v):
            continue
        out[k] = v.isoformat() if isinstance(v, dt.date) else str(v) if isinstance(v, Path) else v
    return out


# parser --------------------------------------------------------------------


def _add_readings(p, labels: bool | None):
    p.add_argument("--readings", required=True, help="readings CSV")
    p.add_argument("--format", choices=("canonical", "cer-code"), default="canonical", help="readings format")
    p.add_argument("--cer-epoch", type=_date, default=None, help="date that CER day code 000 denotes (YYYY-MM-DD)")
    p.add_argument("--completeness", type=float, default=0.9, help="minimum fraction of present slots per week")
    if labels is not None:
        p.add_argument("--labels", required=labels, default=None, help="labels CSV")


def _add_common(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--config", default=None, help="JSON file with flag defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log the effective config")


def _add_week(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--week", type=_date, default=None, help="Monday of the week to explain (YYYY-MM-DD)")
    g.add_argument("--latest", action="store_true", help="explain the latest complete week (default)")
    p.add_argument("--background", choices=("household", "global"), default="household",
                   help="reference profile: the household mean or the mean over all households")
    p.add_argument("--coalitions", type=int, default=2048, help="kernel-SHAP coalition budget")


def _add_explainer_budget(p):
    p.add_argument("--coalitions", type=int, default=2048, help="kernel-SHAP coalition budget")
    p.add_argument("--perturbations", type=int, default=1000, help="LIME sample count")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meterxai", description="Smart-meter classification, explanation and feedback.")
    parser.add_argument("--version", action="version", version=f"meterxai {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="parse readings, report complete weeks, write canonical CSV")
    _add_readings(p, labels=False)
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="93-feature matrix per complete week")
    _add_readings(p, labels=False)
    _add_common(p)
    p.add_argument("--characteristic", default="cooking", help="label column to attach")
    p.add_argument("--out", required=True, help="feature CSV path")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit a random forest on a feature CSV")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--characteristic", default="cooking")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--out", required=True, help="model file path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="class probabilities for a feature CSV")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="k-fold cross-validated ACC and AUC")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("-k", "--k", type=int, default=10, help="number of folds")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--group-by-household", action="store_true", help="keep each household's weeks in one fold")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("explain", help="attribute one household-week's prediction to time segments")
    _add_readings(p, labels=None)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--meter", required=True)
    _add_week(p)
    p.add_argument("--perturbations", type=int, default=1000, help="LIME sample count")
    p.add_argument("--method", choices=("shap", "lime"), default="shap")
    p.add_argument("--scheme", choices=SCHEMES, default="hourly")
    p.add_argument("--out", required=True, help="output path; .csv and .json are written")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("xai-eval", help="faithfulness and stability of explainers")
    _add_readings(p, labels=None)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--characteristic", default="cooking")
    p.add_argument("--methods", default="shap,lime,random", help="comma list of shap, lime, random")
    p.add_argument("--scheme", choices=SCHEMES, default="hourly")
    _add_explainer_budget(p)
    p.add_argument("--n-households", type=int, default=50)
    p.add_argument("--top-k", type=int, default=None, help="segments blurred (default: top 10%%)")
    p.add_argument("--top-k-per-day", type=int, default=3)
    p.add_argument("--out", required=True, help="scores CSV path")
    p.set_defaults(func=cmd_xai_eval)

    p = sub.add_parser("render", help="feedback graphic or text for one household-week")
    _add_readings(p, labels=None)
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--meter", required=True)
    p.add_argument("--characteristic", default="cooking")
    _add_week(p)
    p.add_argument("--viz", choices=("line", "bar", "polar", "shap", "text"), default="line")
    p.add_argument("--tip", choices=("none", "cmt", "et"), default="none")
    p.add_argument("--caption", action=argparse.BooleanOptionalAction, default=False,
                   help="add the explanatory text under the graphic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("analyze", help="OLS on task records or logit on conjoint choices")
    p.add_argument("what", choices=("tasks", "conjoint"))
    _add_common(p)
    p.add_argument("--input", required=True, help="TaskRecord or ChoiceRecord CSV")
    p.add_argument("--reference", default="shap", help="reference visual level")
    p.add_argument("--scheme", choices=("effect", "dummy"), default="effect", help="conjoint encoding")
    p.add_argument("--intercept", action="store_true", help="add an intercept to the conjoint logit")
    p.add_argument("--cov-type", choices=("HC0", "HC1", "HC3"), default="HC0")
    p.add_argument("--outcomes", default=",".join(
        ("reading_time_log", "answer_time_log", "mem_right", "mem_dontknow", "mental_effort", "school_grade")))
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="synthetic households with planted patterns")
    _add_common(p)
    p.add_argument("--n-households", type=int, default=None)
    p.add_argument("--weeks-per-household", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="features, cv, train, explain, xai-eval and render in one run")
    _add_readings(p, labels=True)
    _add_common(p)
    p.add_argument("--characteristic", default="cooking")
    p.add_argument("--meter", default=None, help="household to explain (default: first)")
    _add_week(p)
    p.add_argument("--perturbations", type=int, default=1000)
    p.add_argument("-k", "--k", type=int, default=10)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--group-by-household", action="store_true")
    p.add_argument("--methods", default="shap,random")
    p.add_argument("--n-households", type=int, default=50)
    p.add_argument("--tip", choices=("none", "cmt", "et"), default="none")
    p.add_argument("--caption", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)
    return parser


def _prescan_config(argv) -> tuple[str | None, str | None]:
    """Subcommand and --config path, found before the full parse so file values can fill required flags."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    return command, known.config


def _apply_config(parser, command: str, path: str):
    """Install file values as subparser defaults so explicit flags still win; returns extra synth keys."""
    with _open_read(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: expected a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    synth_cfg = cfg.pop("synth", None)
    subparser = parser._subparsers._group_actions[0].choices[command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in known:
            if command == "synth":
                synth_cfg = {**(synth_cfg or {}), k: v}
                continue
            raise DataError(f"{path}: unknown key {k!r} for {command}")
        action = known[k]
        if action.type is not None and isinstance(v, str):
            v = action.type(v)
        defaults[k] = v
    subparser.set_defaults(**defaults)
    for a in subparser._actions:
        if a.dest in defaults and a.required:
            a.required = False
    return synth_cfg


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(format="%(name)s: %(message)s", level=logging.WARNING)
    parser = build_parser()
    args = None
    try:
        command, config_path = _prescan_config(argv)
        synth_cfg = None
        if config_path and command in parser._subparsers._group_actions[0].choices:
            synth_cfg = _apply_config(parser, command, config_path)
        args = parser.parse_args(argv)
        args.synth_config = synth_cfg
        if args.verbose:
            log.setLevel(logging.INFO)
        log.info("effective config: %s", json.dumps(_jsonable(vars(args)), sort_keys=True))
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        args.func(args)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MeterXAIError as exc:
        print(f"error [{getattr(args, 'command', 'meterxai')}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except (DataError, ValueError) as exc:
        print(f"error [{getattr(args, 'command', 'meterxai')}]: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error [{getattr(args, 'command', 'meterxai')}]: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error [{getattr(args, 'command', 'meterxai')}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
