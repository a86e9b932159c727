"""``qkswap`` command line: features, run, synth, report, cache."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .cache import GramCache
from .config import CACHE_ENV, RunConfig, load_config
from .errors import ConfigError, DataError, QkswapError
from .features import FeatureSet, dataset_digest, extract_features, read_manifest
from .protocol import run_protocol
from .report import report, text_tables, write_run
from .synth import write_synthetic

log = logging.getLogger("qkswap")


def _jobs(value: int) -> int:
    return value if value > 0 else (os.cpu_count() or 1)


def _config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required")
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["folds.seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "out", None):
        overrides["output_dir"] = str(Path(args.out).resolve())
    cfg = load_config(args.config, overrides)
    if getattr(args, "models", None):
        cfg = cfg.select_models(args.models.split(","))
    return cfg


def _features_dir(cfg: RunConfig) -> Path:
    return cfg.resolve(cfg.dataset["features"]) or cfg.output_dir / "features"


def ensure_features(cfg: RunConfig, directory: Path | None = None) -> tuple[FeatureSet, bool]:
    """Load the feature artifact, extracting it from audio first if stale.

    Returns the features and whether the stored artifact was reused.
    """
    directory = directory or _features_dir(cfg)
    manifest = cfg.resolve(cfg.dataset["manifest"])
    if manifest is None:
        if not (directory / "index.json").exists():
            raise ConfigError("set dataset.manifest (audio) or dataset.features (an existing "
                              "feature artifact)")
        return FeatureSet.load(directory), True
    audio_root = cfg.resolve(cfg.dataset["audio_root"]) or manifest.parent
    params = cfg.features.extraction
    records = read_manifest(manifest)
    digest = dataset_digest(records, audio_root, params)
    if (directory / "index.json").exists():
        try:
            stored = FeatureSet.load(directory)
        except DataError as exc:
            log.warning("rebuilding unreadable feature artifact: %s", exc)
        else:
            if stored.meta.get("dataset_digest") == digest:
                return stored, True
    fs = extract_features(records, audio_root, params, jobs=_jobs(cfg.jobs))
    fs.meta["dataset_digest"] = digest
    fs.save(directory)
    return fs, False


def cmd_features(args) -> int:
    cfg = _config(args)
    directory = Path(args.out).resolve() if args.out else _features_dir(cfg)
    if cfg.dataset["manifest"] is None:
        raise ConfigError("features needs dataset.manifest")
    fs, hit = ensure_features(cfg, directory)
    status = "cache hit" if hit else "extracted"
    print(f"{status}: {len(fs)} rows x {fs.values.shape[1]} features in {directory} "
          f"(dataset digest {fs.meta['dataset_digest'][:12]})")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    fs, _ = ensure_features(cfg)
    cache = GramCache(cfg.cache_dir)
    summary = run_protocol(fs, cfg, cache=cache, jobs=_jobs(cfg.jobs))
    write_run(cfg.output_dir, summary.record, summary.svms)
    print(text_tables(summary.record), end="")
    print(f"results written to {cfg.output_dir}")
    return 0


def cmd_synth(args) -> int:
    fs = write_synthetic(args.out, args.n_per_class, args.separation, args.seed, args.dim)
    print(f"wrote {len(fs)} synthetic rows ({args.n_per_class} per class, separation "
          f"{args.separation:g} sigma, seed {args.seed}) to {args.out}")
    return 0


def cmd_report(args) -> int:
    run = report(args.run_dir)
    print(text_tables(run), end="")
    return 0


def _cache_for(args) -> GramCache:
    if args.dir:
        return GramCache(args.dir)
    if args.config:
        return GramCache(_config(args).cache_dir)
    if os.environ.get(CACHE_ENV):
        return GramCache(os.environ[CACHE_ENV])
    raise ConfigError(f"give --dir, --config or set {CACHE_ENV}")


def cmd_cache(args) -> int:
    cache = _cache_for(args)
    if args.action == "list":
        for e in cache.entries():
            n = "corrupt" if e.n < 0 else f"N={e.n}"
            print(f"{e.path.name}  {n}  {e.path.stat().st_size} bytes")
        return 0
    if args.action == "verify":
        problems = cache.verify()
        for path, reason in problems:
            print(f"{path.name}: {reason}")
        if problems:
            raise DataError(f"{len(problems)} damaged cache file(s) in {cache.directory}")
        print(f"{len(cache.entries())} cache file(s) OK")
        return 0
    print(f"removed {cache.clear()} cache file(s) from {cache.directory}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkswap", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("features", help="extract log-mel features from a manifest")
    f.add_argument("--config", required=True)
    f.add_argument("--jobs", type=int)
    f.add_argument("--out", help="feature artifact directory")
    f.set_defaults(func=cmd_features)

    r = sub.add_parser("run", help="run the kernel-swap protocol")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="override folds.seed")
    r.add_argument("--jobs", type=int, help="worker threads (0 = all cores)")
    r.add_argument("--models", help="comma-separated subset of configured model names")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("synth", help="write a synthetic two-class feature artifact")
    s.add_argument("--out", required=True)
    s.add_argument("--n-per-class", type=int, default=100)
    s.add_argument("--separation", type=float, default=6.0, help="class mean distance in sigma")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dim", type=int, default=2)
    s.set_defaults(func=cmd_synth)

    rep = sub.add_parser("report", help="verify a finished run and regenerate its tables")
    rep.add_argument("run_dir", nargs="?", default=None)
    rep.add_argument("--out", help="run directory (alternative to the positional argument)")
    rep.set_defaults(func=cmd_report)

    c = sub.add_parser("cache", help="inspect the Gram matrix cache")
    c.add_argument("action", choices=("list", "verify", "clear"))
    c.add_argument("--dir", help="cache directory")
    c.add_argument("--config")
    c.set_defaults(func=cmd_cache)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "report":
        args.run_dir = args.run_dir or args.out
        if not args.run_dir:
            print("error: report needs a run directory", file=sys.stderr)
            return ConfigError.exit_code
    try:
        return args.func(args)
    except QkswapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
