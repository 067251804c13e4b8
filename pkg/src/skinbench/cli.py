"""Command-line front door: train, detect, ensemble, eval, compare, preset.

Every command is a thin composition of library operations. Work is
parallelized over images (never within one) with results keyed by
manifest order, so output files are byte-identical across worker
counts. SKINBENCH_WORKERS sets the default pool size.
"""

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import ensemble as ens
from . import evaluation as ev
from . import models, rules, spatial
from .detectors import BUILTIN_METHODS, DEFAULT_TAUS, DetectorBank, PROBABILITY_METHODS
from .errors import MissingGroup, MissingPrediction, SkinBenchError
from .imageio import (
    NONSKIN,
    SKIN,
    load_image,
    load_mask,
    load_probability_map,
    save_mask,
    save_probability_map,
    threshold_map,
    validate_tau,
)

log = logging.getLogger("skinbench")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

TRAINABLE_METHODS = ("bayes", "spl", "gmm", "cheddad", "lda")

_MODEL_SLOT = {
    "bayes": ("histogram", models.HistogramModel),
    "spl": ("histogram", models.HistogramModel),
    "gmm": ("gmm", models.GmmModel),
    "cheddad": ("cheddad", rules.CheddadModel),
    "sa2": ("lda", spatial.LdaModel),
}

_BASE_CLASS = {
    "bayes": models.HistogramModel,
    "gmm": models.GmmModel,
    "cheddad": rules.CheddadModel,
}


def _default_workers():
    raw = os.environ.get("SKINBENCH_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_typed_model(path, expected, flag, parser):
    model = models.load_model_file(path)
    if not isinstance(model, expected):
        parser.error(
            f"{flag}: {path} holds a {models.MODEL_KINDS[type(model)]} model, "
            f"expected {models.MODEL_KINDS[expected]}"
        )
    return model


def _gather_inputs(parser, manifest, input_dir):
    """Resolve the image list as (image_id, path[, entry]) tuples."""
    if bool(manifest) == bool(input_dir):
        parser.error("exactly one of --manifest or --input is required")
    if manifest:
        entries = ev.parse_manifest(manifest)
        items = [(e.image_path.stem, e.image_path) for e in entries]
    else:
        root = Path(input_dir)
        if not root.is_dir():
            parser.error(f"--input: {root} is not a directory")
        paths = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        items = [(p.stem, p) for p in paths]
    if not items:
        parser.error("no input images found")
    seen = {}
    for stem, path in items:
        if stem in seen:
            parser.error(f"duplicate output stem {stem!r}: {seen[stem]} and {path}")
        seen[stem] = path
    return items


def _process_images(items, fn, workers):
    """Run fn over items, logging per-image failures; returns failure count."""

    def safe(item):
        try:
            fn(item)
            return None
        except Exception as exc:
            return f"{item[1]}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            failures = [e for e in pool.map(safe, items) if e]
    else:
        failures = [e for e in map(safe, items) if e]
    for message in failures:
        log.error("%s", message)
    return len(failures)


def _sample_rows(rows, limit, rng):
    if limit is None or len(rows) <= limit:
        return rows
    return rows[rng.choice(len(rows), size=limit, replace=False)]


def _collect_rgb_samples(entries, per_image, seed):
    skin_parts, nonskin_parts = [], []
    for i, entry in enumerate(entries):
        img = load_image(entry.image_path)
        mask = load_mask(entry.mask_path)
        flat = img.reshape(-1, 3)
        labels = mask.ravel()
        rng = np.random.default_rng((seed, i))
        skin_parts.append(_sample_rows(flat[labels == SKIN], per_image, rng))
        nonskin_parts.append(_sample_rows(flat[labels == NONSKIN], per_image, rng))
    return (
        np.concatenate(skin_parts) if skin_parts else np.empty((0, 3)),
        np.concatenate(nonskin_parts) if nonskin_parts else np.empty((0, 3)),
    )


def _collect_texture_samples(entries, base_map, per_image, seed):
    skin_parts, nonskin_parts = [], []
    for i, entry in enumerate(entries):
        img = load_image(entry.image_path)
        mask = load_mask(entry.mask_path)
        features = spatial.texture_features(base_map(img))
        flat = features.reshape(-1, features.shape[-1])
        labels = mask.ravel()
        rng = np.random.default_rng((seed, i))
        skin_parts.append(_sample_rows(flat[labels == SKIN], per_image, rng))
        nonskin_parts.append(_sample_rows(flat[labels == NONSKIN], per_image, rng))
    dim = 4 * len(spatial.TEXTURE_KERNEL_SIZES)
    return (
        np.concatenate(skin_parts) if skin_parts else np.empty((0, dim)),
        np.concatenate(nonskin_parts) if nonskin_parts else np.empty((0, dim)),
    )


def _base_map_fn(method, model):
    bank = DetectorBank(**{_MODEL_SLOT[method][0]: model}, base_method=method)
    return bank.base_map


def cmd_train(args, parser):
    entries = ev.parse_manifest(args.manifest)
    started = time.perf_counter()
    if args.method in ("bayes", "spl"):
        model = models.train_histogram(entries, bins=args.bins)
        detail = (
            f"bins={args.bins} skin_px={model.skin_total} "
            f"nonskin_px={model.nonskin_total}"
        )
    elif args.method == "gmm":
        per_image = args.samples_per_image or 5000
        skin, nonskin = _collect_rgb_samples(entries, per_image, args.seed)
        model = models.train_gmm(skin, nonskin, k=args.k, seed=args.seed)
        detail = f"k={args.k} skin_samples={len(skin)} nonskin_samples={len(nonskin)}"
    elif args.method == "cheddad":
        model = rules.train_cheddad(entries, mass=args.mass, min_skin_pixels=args.min_skin)
        detail = f"mass={args.mass} interval=[{model.e_lo:.4f}, {model.e_hi:.4f}]"
    elif args.method == "lda":
        if not args.base_method or not args.base_model:
            parser.error("train lda requires --base-method and --base-model")
        base_model = _load_typed_model(
            args.base_model, _BASE_CLASS[args.base_method], "--base-model", parser
        )
        per_image = args.samples_per_image or 2000
        skin, nonskin = _collect_texture_samples(
            entries, _base_map_fn(args.base_method, base_model), per_image, args.seed
        )
        model = spatial.train_lda(skin, nonskin)
        detail = f"base={args.base_method} skin_samples={len(skin)} nonskin_samples={len(nonskin)}"
    else:  # pragma: no cover - argparse restricts choices
        parser.error(f"unknown method {args.method}")
    models.save_model_file(model, args.out)
    elapsed = time.perf_counter() - started
    print(f"trained {args.method}: {detail} duration={elapsed:.2f}s -> {args.out}")
    return 0


def _make_chen_bounds(args):
    if args.chen_bounds:
        parts = [int(v) for v in args.chen_bounds.split(",")]
        if len(parts) != 6:
            raise ValueError("--chen-bounds needs 6 comma-separated integers")
        return rules.ChenBounds(*parts, sign_flip=args.chen_flip)
    return rules.ChenBounds(sign_flip=args.chen_flip)


def _make_dyc_params(args):
    def pair(text, fallback):
        if not text:
            return fallback
        lo, hi = (float(v) for v in text.split(","))
        return lo, hi

    y = pair(args.dyc_luma, (16.0, 235.0))
    cb = pair(args.dyc_cb, (77.0, 127.0))
    cr = pair(args.dyc_cr, (133.0, 173.0))
    return rules.DycParams(
        y_lo=y[0], y_hi=y[1], cb_lo=cb[0], cb_hi=cb[1], cr_lo=cr[0], cr_hi=cr[1],
        q=args.dyc_q, delta=args.dyc_delta,
    )


def _make_bank(args, parser, method=None):
    slots = {}
    for flag, attr, name in (
        ("hist_model", "histogram", "--hist-model"),
        ("gmm_model", "gmm", "--gmm-model"),
        ("cheddad_model", "cheddad", "--cheddad-model"),
        ("lda_model", "lda", "--lda-model"),
    ):
        path = getattr(args, flag, None)
        if path:
            expected = {
                "histogram": models.HistogramModel,
                "gmm": models.GmmModel,
                "cheddad": rules.CheddadModel,
                "lda": spatial.LdaModel,
            }[attr]
            slots[attr] = _load_typed_model(path, expected, name, parser)
    if method and getattr(args, "model", None):
        if method not in _MODEL_SLOT:
            parser.error(
                f"method {method!r} takes no --model (chen/dyc are parameter-only; "
                "sa1/sa3 take --base-model)"
            )
        slot, expected = _MODEL_SLOT[method]
        slots[slot] = _load_typed_model(args.model, expected, "--model", parser)
    if getattr(args, "base_model", None):
        base = args.base_method
        slot, expected = _MODEL_SLOT[base][0], _BASE_CLASS[base]
        slots.setdefault(slot, _load_typed_model(args.base_model, expected, "--base-model", parser))
    return DetectorBank(
        base_method=args.base_method,
        chen_bounds=_make_chen_bounds(args),
        dyc_params=_make_dyc_params(args),
        seed_q=args.seed_q,
        **slots,
    )


def _method_tau(method, raw):
    if raw is None:
        return DEFAULT_TAUS.get(method)
    if method == "spl":
        return float(raw)
    return validate_tau(raw)


def cmd_detect(args, parser):
    bank = _make_bank(args, parser, method=args.method)
    missing = bank.missing(args.method)
    if missing:
        parser.error(f"method {args.method!r} needs model(s): {', '.join(missing)}")
    tau = _method_tau(args.method, args.tau)
    items = _gather_inputs(parser, args.manifest, args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    maps_dir = None
    if args.dump_maps:
        if args.method not in PROBABILITY_METHODS:
            parser.error(f"--dump-maps requires a probability method {PROBABILITY_METHODS}")
        maps_dir = out_dir / "maps"
        maps_dir.mkdir(exist_ok=True)

    def work(item):
        stem, path = item
        img = load_image(path)
        if maps_dir is not None:
            pmap = bank.probability_map(args.method, img)
            save_probability_map(pmap, maps_dir / f"{stem}.png")
            mask = threshold_map(pmap, int(tau))
        else:
            mask = bank.mask(args.method, img, tau)
        save_mask(mask, out_dir / f"{stem}.png")

    failures = _process_images(items, work, args.workers)
    print(f"wrote {len(items) - failures}/{len(items)} mask(s) -> {out_dir}")
    return 1 if failures else 0


def _resolve_config(args, parser):
    if bool(args.config) == bool(args.preset):
        parser.error("exactly one of --config or --preset is required")
    if args.preset:
        cfg = ens.preset(args.preset, w_tau=args.wtau)
    else:
        cfg = ens.parse_config(Path(args.config).read_text(encoding="utf-8"))
        if args.wtau:
            cfg = ens.EnsembleConfig(members=cfg.members, w_tau=args.wtau).validate()
    map_dirs = {}
    for spec_item in args.map_dir or []:
        name, _, directory = spec_item.partition("=")
        if not name or not directory:
            parser.error(f"--map-dir expects NAME=DIR, got {spec_item!r}")
        map_dirs[name] = directory
    if map_dirs:
        cfg = ens.with_map_dirs(cfg, map_dirs)
    return cfg


def cmd_ensemble(args, parser):
    cfg = _resolve_config(args, parser)
    bank = _make_bank(args, parser)
    problems = ens.missing_requirements(cfg, bank)
    if problems:
        parser.error("ensemble is not runnable: " + "; ".join(problems))
    items = _gather_inputs(parser, args.manifest, args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(item):
        stem, path = item
        mask = ens.run_ensemble(cfg, load_image(path), bank, image_id=stem)
        save_mask(mask, out_dir / f"{stem}.png")

    failures = _process_images(items, work, args.workers)
    print(f"wrote {len(items) - failures}/{len(items)} fused mask(s) -> {out_dir}")
    return 1 if failures else 0


def _prediction_paths(entries, pred_dir):
    pred_dir = Path(pred_dir)
    paths = [pred_dir / f"{e.image_path.stem}.png" for e in entries]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise MissingPrediction(f"{len(missing)} prediction(s) missing: {shown}")
    return paths


def _row(args, **overrides):
    row = {
        "method": args.method,
        "dataset": args.dataset,
        "tau": args.tau if args.tau is not None else "",
    }
    row.update(overrides)
    return row


def _metric_cells(m):
    return {
        "precision": m.precision,
        "recall": m.recall,
        "f1": m.f1,
        "tpr": m.tpr,
        "fpr": m.fpr,
    }


def cmd_eval(args, parser):
    entries = ev.parse_manifest(args.manifest)
    if not entries:
        parser.error(f"manifest {args.manifest} is empty")
    preds = _prediction_paths(entries, args.pred)
    rows = []
    if args.ap:
        pairs = []
        for entry, pred in zip(entries, preds):
            if entry.label is None:
                parser.error(
                    f"--ap needs face/nonface labels; {entry.image_path} has none"
                )
            mask = load_mask(pred)
            pairs.append((entry.label == "face", float((mask == SKIN).mean())))
        rows.append(_row(args, ap=ev.average_precision(pairs)))
    elif args.sweep:
        taus = [int(v) for v in args.sweep.split(",")]
        maps = [load_probability_map(p) for p in preds]
        gts = [load_mask(e.mask_path) for e in entries]
        for tau, m in ev.threshold_sweep(maps, gts, taus):
            rows.append(_row(args, tau=tau, **_metric_cells(m)))
    elif args.group_average:
        groups = {}
        for entry, pred in zip(entries, preds):
            if entry.group is None:
                raise MissingGroup(f"{entry.image_path} has no group id")
            counts = ev.confusion(load_mask(pred), load_mask(entry.mask_path))
            groups.setdefault(entry.group, []).append(counts)
        rows.append(_row(args, **_metric_cells(ev.group_average(groups))))
    else:
        counts = [
            ev.confusion(load_mask(pred), load_mask(entry.mask_path))
            for entry, pred in zip(entries, preds)
        ]
        rows.append(_row(args, **_metric_cells(ev.aggregate_pixel_level(counts))))
    ev.write_report(rows, args.report)
    print(f"wrote {len(rows)} row(s) -> {args.report}")
    return 0


def _score_of(row):
    if row["f1"]:
        return float(row["f1"])
    if row["ap"]:
        return float(row["ap"])
    return None


def cmd_compare(args, parser):
    methods, datasets = [], []
    scores = {}
    for report in args.reports:
        for row in ev.read_report(report):
            score = _score_of(row)
            if score is None:
                continue
            key = (row["method"], row["dataset"])
            if row["method"] not in methods:
                methods.append(row["method"])
            if row["dataset"] not in datasets:
                datasets.append(row["dataset"])
            # Several rows per cell (threshold sweeps): keep the best.
            scores[key] = max(score, scores.get(key, float("-inf")))
    matrix = np.full((len(methods), len(datasets)), np.nan)
    for i, method in enumerate(methods):
        for j, dataset in enumerate(datasets):
            if (method, dataset) in scores:
                matrix[i, j] = scores[(method, dataset)]
    table = ev.rank_table(matrix)
    import csv

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", *datasets, "avg_rank", "rank"])
        for i, method in enumerate(methods):
            writer.writerow(
                [method]
                + [f"{matrix[i, j]:.10g}" for j in range(len(datasets))]
                + [f"{table.average[i]:.10g}", f"{table.final[i]:.10g}"]
            )
    print(f"ranked {len(methods)} method(s) over {len(datasets)} dataset(s) -> {args.out}")
    return 0


def cmd_preset(args, parser):
    text = ens.format_config(ens.preset(args.name, w_tau=args.wtau))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote preset {args.name} -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _add_model_flags(p):
    p.add_argument("--hist-model", help="histogram model file (bayes/spl members)")
    p.add_argument("--gmm-model", help="gmm model file")
    p.add_argument("--cheddad-model", help="cheddad model file")
    p.add_argument("--lda-model", help="lda model file (sa2)")


def _add_rule_flags(p):
    p.add_argument("--chen-flip", action="store_true", help="negate channel differences")
    p.add_argument("--chen-bounds", help="six comma-separated bounds loR,hiR,loG,hiG,loB,hiB")
    p.add_argument("--dyc-luma", help="luma gate LO,HI (default 16,235)")
    p.add_argument("--dyc-cb", help="static Cb gate LO,HI (default 77,127)")
    p.add_argument("--dyc-cr", help="static Cr gate LO,HI (default 133,173)")
    p.add_argument("--dyc-q", type=float, default=0.05, help="dynamic range quantile")
    p.add_argument("--dyc-delta", type=float, default=12.0, help="correlation tolerance")
    p.add_argument("--seed-q", type=int, default=230, help="fixed seed threshold (0-255)")


def _add_io_flags(p):
    p.add_argument("--manifest", help="TAB-separated image/mask manifest")
    p.add_argument("--input", help="directory of input images")
    p.add_argument("--out", required=True, help="output directory for masks")
    p.add_argument(
        "--workers",
        type=int,
        default=_default_workers(),
        help="worker threads (default: SKINBENCH_WORKERS or 1)",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skinbench",
        description="Skin-detection toolkit and fair-comparison benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a detector model from a manifest")
    p.add_argument("method", choices=TRAINABLE_METHODS)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--bins", type=int, default=32, help="histogram bins per channel")
    p.add_argument("--k", type=int, default=16, help="mixture components per class")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--mass", type=float, default=0.95, help="central quantile mass")
    p.add_argument("--min-skin", type=int, default=1000, help="minimum skin pixels")
    p.add_argument("--samples-per-image", type=int, help="per-class pixel cap per image")
    p.add_argument("--base-method", choices=PROBABILITY_METHODS, default=None)
    p.add_argument("--base-model", help="model file for the base probability method")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run one detector over images")
    p.add_argument("method", choices=BUILTIN_METHODS)
    _add_io_flags(p)
    p.add_argument("--model", help="the method's own model file")
    p.add_argument("--base-method", choices=PROBABILITY_METHODS, default="bayes")
    p.add_argument("--base-model", help="model file for the base probability method")
    p.add_argument("--tau", type=float, default=None, help="decision threshold")
    p.add_argument("--dump-maps", action="store_true", help="also write probability maps")
    _add_model_flags(p)
    _add_rule_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("ensemble", help="run a weighted-vote ensemble")
    p.add_argument("--config", help="ensemble config file")
    p.add_argument("--preset", choices=sorted(ens.PRESET_WEIGHTS))
    p.add_argument("--wtau", type=float, default=None, help="sensitivity divisor override")
    p.add_argument(
        "--map-dir",
        action="append",
        metavar="NAME=DIR",
        help="external probability-map directory for a member",
    )
    p.add_argument("--base-method", choices=PROBABILITY_METHODS, default="bayes")
    _add_io_flags(p)
    _add_model_flags(p)
    _add_rule_flags(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="directory of prediction masks/maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="CSV report to write")
    p.add_argument("--method", default="", help="method name recorded in the report")
    p.add_argument("--dataset", default="", help="dataset name recorded in the report")
    p.add_argument("--tau", type=float, default=None, help="threshold recorded in the report")
    p.add_argument("--group-average", action="store_true", help="average per group id")
    p.add_argument("--sweep", help="comma-separated taus; --pred holds probability maps")
    p.add_argument("--ap", action="store_true", help="face/nonface ranking protocol")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="merge reports into a ranked table")
    p.add_argument("reports", nargs="+", help="report CSVs to merge")
    p.add_argument("--out", required=True, help="ranked CSV to write")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("preset", help="emit a published ensemble configuration")
    p.add_argument("name", choices=sorted(ens.PRESET_WEIGHTS))
    p.add_argument("--wtau", type=float, default=None)
    p.add_argument("--out", help="file to write (default: stdout)")
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except SkinBenchError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
