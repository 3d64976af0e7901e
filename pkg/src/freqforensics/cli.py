"""Command-line interface.

Subcommands: spectrum, reduced, eval-scores, logreg, perturb, schedule, mmd,
cache. Global options (--manifest, --seed, --jobs, --cache-dir, --out) fall
back to FREQFORENSICS_* environment variables, then to defaults. Every run
writes exactly one run_report.json into the output directory; the exit code
is 0 iff the run produced no errors (per-file warnings are allowed).
"""

import argparse
import datetime
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import classifier, diffusion, featurespace, metrics, perturb, serialize, transforms
from .errors import DataError, FreqForensicsError, ParameterError, ZeroBinError
from .manifest import SpectrumCache, cache_key, load_manifest, split
from .preprocess import load_image, median_highpass, save_gray_png, to_grayscale

ENV_PREFIX = "FREQFORENSICS_"


def _env_default(name: str, fallback):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), fallback)


def _resolve(value, env_name: str, default, cast):
    if value is not None:
        return cast(value)
    env = _env_default(env_name, None)
    if env is not None:
        return cast(env)
    return default


class RunContext:
    """Collects outputs/warnings/errors and writes the run report."""

    def __init__(self, command: str, out_dir: Path, config: dict):
        self.command = command
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.outputs: list[str] = []
        self.warnings: list[str] = []
        self.errors: list[str] = []
        self.started = time.time()

    def add_output(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        print(f"warning: {message}", file=sys.stderr)

    def error(self, message: str) -> None:
        self.errors.append(message)
        print(f"error: {message}", file=sys.stderr)

    def finish(self) -> int:
        report = {
            "command": self.command,
            "argv": sys.argv[1:],
            "config": self.config,
            "started_utc": datetime.datetime.fromtimestamp(
                self.started, datetime.timezone.utc
            ).isoformat(),
            "duration_s": round(time.time() - self.started, 3),
            "outputs": self.outputs,
            "warnings": self.warnings,
            "errors": self.errors,
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        report_path = self.out_dir / "run_report.json"
        report_path.write_text(json.dumps(report, indent=2), encoding="utf-8")
        print(f"report: {report_path}")
        return 0 if not self.errors else 1


def _gray_pipeline(path, highpass_kernel: int | None) -> np.ndarray:
    gray = to_grayscale(load_image(path))
    if highpass_kernel is not None:
        gray = median_highpass(gray, highpass_kernel)
    return gray


def _load_manifest_with_seed(args):
    man = load_manifest(args.manifest)
    if args.seed is not None and args.seed != man.seed:
        man = type(man)(name=man.name, seed=args.seed, classes=man.classes, split=man.split)
    return man


def _class_files(man, label: str, partition: str) -> list[Path]:
    parts = split(man)
    if label not in parts:
        raise DataError(f"manifest has no class {label!r} (have {sorted(parts)})")
    if partition == "all":
        files = []
        for name in ("train", "val", "test"):
            files.extend(parts[label][name])
        return files
    return parts[label][partition]


def _parallel_map(fn, items, jobs: int):
    """Order-preserving map with a bounded number of in-flight items.

    Results are yielded (and therefore reduced) in input order, keeping
    outputs bit-identical regardless of thread scheduling, without holding
    the whole corpus in memory.
    """
    if jobs <= 1:
        yield from map(fn, items)
        return
    from collections import deque
    from itertools import islice

    with ThreadPoolExecutor(max_workers=jobs) as executor:
        pending = deque()
        iterator = iter(items)
        for item in islice(iterator, 2 * jobs):
            pending.append(executor.submit(fn, item))
        while pending:
            result = pending.popleft().result()
            try:
                pending.append(executor.submit(fn, next(iterator)))
            except StopIteration:
                pass
            yield result


# ---------------------------------------------------------------- spectrum


def cmd_spectrum(args, ctx: RunContext) -> None:
    man = _load_manifest_with_seed(args)
    files = _class_files(man, args.class_label, args.partition)
    if not files:
        raise DataError(f"class {args.class_label!r} has no files in partition {args.partition!r}")

    use_highpass = {"on": True, "off": False, "auto": args.transform == "dft"}[args.highpass]
    kernel = args.highpass_kernel if use_highpass else None
    cache = SpectrumCache(args.cache_dir) if args.cache_dir else None
    descriptor = {
        "op": "mean-spectrum-term",
        "transform": args.transform,
        "highpass_kernel": kernel,
        "version": 1,
    }

    def one(path: Path) -> np.ndarray:
        if cache is not None:
            key = cache_key(path, descriptor)
            hit = cache.get(key)
            if hit is not None:
                return hit
        gray = _gray_pipeline(path, kernel)
        if args.transform == "dft":
            values = transforms.dft2(gray, transforms.SpectrumKind.DFT_MAGNITUDE).values
        else:
            values = transforms.dct2(gray).values
        if cache is not None:
            cache.put(key, values)
        return values

    kind = (
        transforms.SpectrumKind.DFT_MAGNITUDE
        if args.transform == "dft"
        else transforms.SpectrumKind.DCT_ABS
    )
    acc = transforms.SpectrumAccumulator()
    for values in _parallel_map(one, files, args.jobs):
        acc.add(transforms.Spectrum2D(values, kind))
    mean = acc.finalize_mean()

    display = mean.values / (mean.height * mean.width) if args.display_normalize else mean.values
    prefix = ctx.out_dir / f"spectrum_{args.class_label}_{args.transform}"
    serialize.write_matrix(ctx.add_output(f"{prefix}.bin"), mean.values)
    serialize.write_spectrum_csv(ctx.add_output(f"{prefix}.csv"), mean.values, mean.kind.value)
    serialize.save_heatmap_png(
        ctx.add_output(f"{prefix}.png"), display, args.clip_lo, args.clip_hi,
        log10_scale=not args.linear_heatmap,
    )
    print(f"mean {args.transform} spectrum over {acc.count} images -> {prefix}.bin/.csv/.png")


# ---------------------------------------------------------------- reduced


def _mean_reduced(man_files: list[Path], jobs: int) -> transforms.ReducedSpectrum:
    def one(path: Path) -> np.ndarray:
        gray = to_grayscale(load_image(path))
        return transforms.reduce_spectrum(transforms.dft2(gray)).bins

    total = None
    count = 0
    for bins in _parallel_map(one, man_files, jobs):
        total = bins if total is None else total + bins
        count += 1
    return transforms.ReducedSpectrum(total / count)


def cmd_reduced(args, ctx: RunContext) -> None:
    man = _load_manifest_with_seed(args)
    real_files = _class_files(man, args.real_label, args.partition)
    fake_files = _class_files(man, args.fake_label, args.partition)
    if not real_files or not fake_files:
        raise DataError("both classes must be nonempty")
    s_real = _mean_reduced(real_files, args.jobs)
    s_fake = _mean_reduced(fake_files, args.jobs)
    try:
        err = transforms.spectral_error(s_fake, s_real)
    except ZeroBinError as exc:
        raise DataError(f"reference spectrum has zero bins {exc.bins}") from exc
    clipped = transforms.clip_for_display(err)

    prefix = ctx.out_dir / f"reduced_{args.fake_label}_vs_{args.real_label}"
    serialize.write_matrix(ctx.add_output(f"{prefix}_real.bin"), s_real.bins)
    serialize.write_matrix(ctx.add_output(f"{prefix}_fake.bin"), s_fake.bins)
    rows = [
        (i, repr(float(s_real.bins[i])), repr(float(s_fake.bins[i])),
         repr(float(err[i])), repr(float(clipped[i])))
        for i in range(s_real.n_bins)
    ]
    serialize.write_csv(
        ctx.add_output(f"{prefix}.csv"),
        ["bin", "s_real", "s_fake", "err", "err_clipped"],
        rows,
        comments={
            "normalization": s_real.normalization,
            "real": f"{args.real_label} ({len(real_files)} images)",
            "fake": f"{args.fake_label} ({len(fake_files)} images)",
        },
    )
    print(f"reduced spectra + error -> {prefix}.csv")


# ---------------------------------------------------------------- eval-scores


def cmd_eval_scores(args, ctx: RunContext) -> None:
    rows = []
    for path in args.score_files:
        path = Path(path)
        try:
            scores = metrics.read_score_csv(path)
            result = metrics.evaluate_scores(scores, fars=(0.05, 0.01))
        except FreqForensicsError as exc:
            ctx.error(f"{path}: {exc}")
            continue
        rows.append(
            (
                path.stem,
                path.parent.name or "-",
                f"{100.0 * result['auroc']:.1f}",
                f"{100.0 * result['pd_at_0.05']:.1f}",
                f"{100.0 * result['pd_at_0.01']:.1f}",
            )
        )
    out = ctx.out_dir / "metrics_report.csv"
    serialize.write_csv(
        ctx.add_output(out),
        ["detector", "dataset", "auroc", "pd_at_5", "pd_at_1"],
        rows,
        comments={"note": metrics.POSITIVE_CLASS_NOTE, "units": "percent, one decimal"},
    )
    for row in rows:
        print(f"{row[0]}: {row[2]} / {row[3]} / {row[4]}")


# ---------------------------------------------------------------- logreg


def _load_split_features(labels_by_class, partition_lists, tag, jobs):
    """Build a FeatureMatrix for one partition from per-class file lists."""
    paths = []
    labels = []
    ids = []
    for label, files in partition_lists:
        for path in files:
            paths.append(path)
            labels.append(labels_by_class[label])
            ids.append(f"{label}/{path.name}")

    def one(path: Path) -> np.ndarray:
        return to_grayscale(load_image(path))

    images = list(_parallel_map(one, paths, jobs))
    return classifier.extract_features(images, tag, labels=np.array(labels), ids=ids)


def cmd_logreg(args, ctx: RunContext) -> None:
    man = _load_manifest_with_seed(args)
    parts = split(man)
    labels = sorted(parts)
    if len(labels) != 2:
        raise DataError(f"logreg needs a manifest with exactly two classes, got {labels}")
    fake_label = args.fake_label or next(l for l in labels if l != "real")
    real_label = next(l for l in labels if l != fake_label)
    labels_by_class = {real_label: 0, fake_label: 1}

    requested = [t.strip() for t in args.transforms.split(",") if t.strip()]
    for tag in requested:
        if tag not in classifier.TRANSFORM_TAGS:
            raise ParameterError(f"unknown transform {tag!r}; choose from {classifier.TRANSFORM_TAGS}")

    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(classifier.LAMBDA_GRID)
    results = {}
    for tag in requested:
        matrices = {}
        for part in ("train", "val", "test"):
            lists = [(lab, parts[lab][part]) for lab in (real_label, fake_label)]
            if not any(files for _, files in lists):
                raise DataError(f"partition {part!r} is empty; logreg needs all three partitions")
            matrices[part] = _load_split_features(labels_by_class, lists, tag, args.jobs)
        standardizer = classifier.fit_standardizer(matrices["train"])
        std = {p: classifier.apply_standardizer(standardizer, m) for p, m in matrices.items()}
        if args.k_folds:
            best_lambda, model, report = classifier.grid_search(
                std["train"], None, grid, k_folds=args.k_folds
            )
        else:
            best_lambda, model, report = classifier.grid_search(std["train"], std["val"], grid)
        model = classifier.LRModel(
            weights=model.weights, bias=model.bias, lam=model.lam, transform_tag=tag,
            standardizer=standardizer, converged=model.converged, iterations=model.iterations,
        )
        train_acc, _ = classifier.evaluate(model, std["train"])
        val_acc, _ = classifier.evaluate(model, std["val"])
        test_acc, score_set = classifier.evaluate(model, std["test"])
        results[tag] = {
            "lambda": best_lambda, "train_acc": train_acc, "val_acc": val_acc,
            "test_acc": test_acc,
        }
        classifier.save_model(ctx.add_output(ctx.out_dir / f"logreg_{tag}.json"), model)
        metrics.write_score_csv(ctx.add_output(ctx.out_dir / f"logreg_{tag}_test_scores.csv"),
                                score_set)
        serialize.write_csv(
            ctx.add_output(ctx.out_dir / f"logreg_{tag}_grid.csv"),
            ["lambda", "train_acc", "val_acc"],
            ((repr(r["lambda"]), repr(r["train_acc"]), repr(r["val_acc"])) for r in report),
        )

    pixel_acc = results.get("pixel", {}).get("test_acc")
    rows = []
    for tag in requested:
        r = results[tag]
        gain = "" if pixel_acc is None else f"{100.0 * (r['test_acc'] - pixel_acc):+.1f}"
        rows.append(
            (tag, repr(r["lambda"]), f"{100.0 * r['train_acc']:.1f}", f"{100.0 * r['val_acc']:.1f}",
             f"{100.0 * r['test_acc']:.1f}", gain)
        )
        print(f"{tag}: test accuracy {100.0 * r['test_acc']:.1f}% (lambda={r['lambda']:g})")
    serialize.write_csv(
        ctx.add_output(ctx.out_dir / "logreg_accuracy.csv"),
        ["transform", "lambda", "train_acc", "val_acc", "test_acc", "gain_vs_pixel"],
        rows,
        comments={"units": "percent, one decimal", "positive_class": fake_label},
    )


# ---------------------------------------------------------------- perturb


def cmd_perturb(args, ctx: RunContext) -> None:
    man = _load_manifest_with_seed(args)
    parts = split(man)
    cfg = perturb.PerturbConfig(
        blur_kernels=tuple(int(k) for k in args.blur_kernels.split(",")),
        crop_factor_range=tuple(float(x) for x in args.crop_range.split(",")),
        jpeg_quality_range=tuple(int(x) for x in args.jpeg_range.split(",")),
        noise_variance_range=tuple(float(x) for x in args.noise_range.split(",")),
        apply_probability=args.probability,
        seed=args.seed if args.seed is not None else man.seed,
    )
    jsonl_lines: list[str] = []
    n_images = 0
    for label in sorted(parts):
        files = [p for part in ("train", "val", "test") for p in parts[label][part]]
        out_class_dir = ctx.out_dir / "perturbed" / label

        def one(path: Path):
            image_id = f"{label}/{path.name}"
            try:
                gray = to_grayscale(load_image(path))
                result, records = perturb.apply_pipeline(gray, cfg, image_id)
                return image_id, path.name, result, records, None
            except FreqForensicsError as exc:
                return image_id, path.name, None, [], str(exc)

        for image_id, name, result, records, failure in _parallel_map(one, files, args.jobs):
            if failure is not None:
                ctx.warn(f"{image_id}: skipped ({failure})")
                continue
            out_path = out_class_dir / Path(name).with_suffix(".png").name
            out_path.parent.mkdir(parents=True, exist_ok=True)
            save_gray_png(result, out_path)
            ctx.outputs.append(str(out_path))
            jsonl_lines.extend(perturb.records_to_jsonl(image_id, records))
            n_images += 1

    records_path = ctx.add_output(ctx.out_dir / "perturb_records.jsonl")
    records_path.write_text("\n".join(jsonl_lines) + ("\n" if jsonl_lines else ""),
                            encoding="utf-8")
    print(f"perturbed {n_images} images -> {ctx.out_dir / 'perturbed'}")


# ---------------------------------------------------------------- schedule


def cmd_schedule(args, ctx: RunContext) -> None:
    sched = diffusion.linear_schedule(args.T, args.beta_start, args.beta_end)
    out = ctx.add_output(ctx.out_dir / "schedule.csv")
    diffusion.write_schedule_csv(out, sched, lam=args.hybrid_lambda, hybrid_bound=args.hybrid_bound)
    print(f"schedule with T={args.T} -> {out}")


# ---------------------------------------------------------------- mmd


def _read_feature_file(path: Path) -> np.ndarray:
    if path.suffix == ".csv":
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    return serialize.read_matrix(path)


def cmd_mmd(args, ctx: RunContext) -> None:
    paths = [Path(p) for p in args.feature_files]
    if len(paths) < 2 or len(paths) % 2 != 0:
        raise ParameterError("mmd needs an even number of feature files (consecutive pairs)")
    rows = []
    for a_path, b_path in zip(paths[0::2], paths[1::2]):
        try:
            a = featurespace.FeatureCloud(_read_feature_file(a_path), source_tag=a_path.stem)
            b = featurespace.FeatureCloud(_read_feature_file(b_path), source_tag=b_path.stem)
            sigma, mmd2 = featurespace.mmd2_median_heuristic(a, b)
        except FreqForensicsError as exc:
            ctx.error(f"{a_path.name} vs {b_path.name}: {exc}")
            continue
        rows.append((a_path.stem, b_path.stem, repr(float(sigma)), repr(float(mmd2))))
        print(f"{a_path.stem} vs {b_path.stem}: sigma={sigma:.6g} mmd2={mmd2:.6g}")
    serialize.write_csv(
        ctx.add_output(ctx.out_dir / "mmd.csv"),
        ["a", "b", "sigma", "mmd2"],
        rows,
        comments={"kernel": "gaussian exp(-d^2/(2 sigma^2)), sigma=median pooled distance"},
    )


# ---------------------------------------------------------------- cache


def cmd_cache(args, ctx: RunContext) -> None:
    if not args.cache_dir:
        raise ParameterError("cache command requires --cache-dir (or FREQFORENSICS_CACHE_DIR)")
    cache = SpectrumCache(args.cache_dir)
    if args.cache_action == "stats":
        stats = cache.stats()
        print(f"{stats['entries']} entries, {stats['bytes']} bytes in {args.cache_dir}")
    else:
        removed = cache.clear()
        print(f"removed {removed} entries from {args.cache_dir}")


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqforensics",
        description="Frequency-domain forensics toolkit for generated-image analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_manifest: bool = False):
        p.add_argument("--manifest", default=None, help="dataset manifest JSON")
        p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        p.add_argument("--jobs", type=int, default=None, help="parallel workers (default 1)")
        p.add_argument("--cache-dir", default=None, help="spectrum cache directory")
        p.add_argument("--out", default=None, help="output directory (default ./out)")
        p.set_defaults(needs_manifest=needs_manifest)

    p = sub.add_parser("spectrum", help="mean DFT/DCT spectrum of one class")
    common(p, needs_manifest=True)
    p.add_argument("--class", dest="class_label", required=True)
    p.add_argument("--transform", choices=("dft", "dct"), default="dft")
    p.add_argument("--partition", choices=("all", "train", "val", "test"), default="all")
    p.add_argument("--highpass", choices=("auto", "on", "off"), default="auto",
                   help="median high-pass before the transform (auto: on for dft)")
    p.add_argument("--highpass-kernel", type=int, default=3)
    p.add_argument("--clip-lo", type=float, default=1e-5)
    p.add_argument("--clip-hi", type=float, default=1e-1)
    p.add_argument("--linear-heatmap", action="store_true", help="linear instead of log10 mapping")
    p.add_argument("--display-normalize", action="store_true",
                   help="divide displayed magnitudes by H*W")
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("reduced", help="mean reduced spectra and spectral error")
    common(p, needs_manifest=True)
    p.add_argument("--real", dest="real_label", required=True)
    p.add_argument("--fake", dest="fake_label", required=True)
    p.add_argument("--partition", choices=("all", "train", "val", "test"), default="all")
    p.set_defaults(handler=cmd_reduced)

    p = sub.add_parser("eval-scores", help="AUROC / Pd@5%% / Pd@1%% per score file")
    common(p)
    p.add_argument("score_files", nargs="+")
    p.set_defaults(handler=cmd_eval_scores)

    p = sub.add_parser("logreg", help="logistic regression on pixel/frequency features")
    common(p, needs_manifest=True)
    p.add_argument("--transforms", default=",".join(classifier.TRANSFORM_TAGS))
    p.add_argument("--grid", default=None, help="comma-separated lambda grid")
    p.add_argument("--k-folds", type=int, default=None,
                   help="use k-fold CV on the training split instead of the holdout val split")
    p.add_argument("--fake-label", default=None)
    p.set_defaults(handler=cmd_logreg)

    p = sub.add_parser("perturb", help="apply the perturbation battery to a corpus")
    common(p, needs_manifest=True)
    p.add_argument("--blur-kernels", default="3,5,7,9")
    p.add_argument("--crop-range", default="5,20")
    p.add_argument("--jpeg-range", default="10,75")
    p.add_argument("--noise-range", default="5,20")
    p.add_argument("--probability", type=float, default=1.0)
    p.set_defaults(handler=cmd_perturb)

    p = sub.add_parser("schedule", help="noise schedule and loss-weight table")
    common(p)
    p.add_argument("--T", type=int, default=diffusion.DEFAULT_T)
    p.add_argument("--beta-start", type=float, default=diffusion.DEFAULT_BETA_START)
    p.add_argument("--beta-end", type=float, default=diffusion.DEFAULT_BETA_END)
    p.add_argument("--hybrid-lambda", type=float, default=diffusion.DEFAULT_HYBRID_LAMBDA)
    p.add_argument("--hybrid-bound", choices=("lower", "upper"), default="upper")
    p.set_defaults(handler=cmd_schedule)

    p = sub.add_parser("mmd", help="MMD between feature-file pairs")
    common(p)
    p.add_argument("feature_files", nargs="+")
    p.set_defaults(handler=cmd_mmd)

    p = sub.add_parser("cache", help="inspect or clear the spectrum cache")
    common(p)
    p.add_argument("cache_action", choices=("stats", "clear"))
    p.set_defaults(handler=cmd_cache)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    args.manifest = _resolve(args.manifest, "manifest", None, str)
    args.seed = _resolve(args.seed, "seed", None, int)
    args.jobs = _resolve(args.jobs, "jobs", 1, int)
    args.cache_dir = _resolve(args.cache_dir, "cache_dir", None, str)
    out_dir = Path(_resolve(args.out, "out", "out", str))

    if args.needs_manifest and not args.manifest:
        parser.error(f"{args.command} requires --manifest (or {ENV_PREFIX}MANIFEST)")

    config = {k: v for k, v in vars(args).items() if k not in ("handler", "needs_manifest")}
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()}
    ctx = RunContext(args.command, out_dir, config)
    try:
        args.handler(args, ctx)
    except FreqForensicsError as exc:
        ctx.error(str(exc))
    return ctx.finish()


if __name__ == "__main__":
    raise SystemExit(main())
