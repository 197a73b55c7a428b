"""Command-line entry point: ``synth``, ``preprocess``, ``evaluate`` and ``explain``.

Randomness
----------
Every random stream derives from ``--seed`` through
``SeedSequence(seed, spawn_key=key)`` with fixed keys, so adding or
removing a method or region never changes the others:

* ``(0,)`` synthetic data
* ``(1, region)`` fold plan of a region (LW=0, HW=1)
* ``(2, region, method)`` training of a method (index in lra, l2d, lrp, pca, cnn)
* ``(3, region)`` train/test split of ``explain``
* ``(4, region)`` column permutations of ``explain``
"""

from __future__ import annotations

import argparse
import configparser
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cnn import CNN, CNNArch, TrainConfig
from .evaluation import METHOD_ORDER, cross_validate, make_folds, summary_table
from .explain import gnuplot_script, permutation_importance, saliency_map, write_json
from .linear import L2D, LRA, LRP, PCALR, PoolingSpec
from .preprocess import SGConfig, preprocess
from .spectra import REGIONS, SpectraSet, extract_region, load_spectra, merge, save_spectra, split_by_label
from .synth import PRESET_NAMES, PRESETS, generate
from .synth import preset as synth_preset

REGION_KEYS = {"LW": 0, "HW": 1}


def stream(seed: int, *key: int) -> np.random.SeedSequence:
    """Named child stream of the run seed."""
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


@dataclass
class RunConfig:
    input_a: str | None = None
    input_b: str | None = None
    regions: list = field(default_factory=lambda: ["LW", "HW"])
    methods: list = field(default_factory=lambda: list(METHOD_ORDER))
    folds: int = 10
    seed: int = 0
    out: str = "out"
    sg_window: int = 91
    sg_order: int = 3
    outlier_k: float = 3.0
    skip_preprocess: bool = False
    pool_cuts: list | None = None
    pca_components: int = 5
    shrinkage: float = 1.0
    inner_folds: int = 10
    epochs: int = 100
    patience: int = 10
    cnn_dtype: str = "float32"
    jobs: int = 1
    n_perm: int = 30
    test_fraction: float = 0.25
    ecdf: str = "pooled"
    gnuplot: bool = False

    def __post_init__(self):
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = [m for m in self.methods if m not in METHOD_ORDER]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; choose from {', '.join(METHOD_ORDER)}")
        bad = [r for r in self.regions if r not in REGIONS]
        if bad:
            raise ValueError(f"unknown region(s) {bad}; choose from {', '.join(REGIONS)}")
        if self.folds < 2:
            raise ValueError("--folds must be at least 2")
        if not 0 < self.test_fraction < 1:
            raise ValueError("--test-fraction must lie in (0, 1)")


def _method(cfg: RunConfig, name: str):
    if name == "lra":
        return LRA(cfg.shrinkage)
    if name == "l2d":
        return L2D(cfg.inner_folds)
    if name == "lrp":
        return LRP(PoolingSpec(tuple(cfg.pool_cuts)) if cfg.pool_cuts else None, cfg.shrinkage)
    if name == "pca":
        return PCALR(cfg.pca_components, cfg.shrinkage, cfg.inner_folds)
    return CNN(CNNArch(), TrainConfig(epochs=cfg.epochs, patience=cfg.patience, dtype=cfg.cnn_dtype))


class Run:
    """Output directory bookkeeping; the manifest lists what was written."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command, self.cfg = command, cfg
        self.out = Path(cfg.out)
        self.artifacts: list[str] = []
        self.extra: dict = {}
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(name)
        return self.out / name

    def manifest(self, status: str, error: str | None = None) -> None:
        payload = {
            "command": self.command,
            "status": status,
            "error": error,
            "config": asdict(self.cfg),
            "seed_streams": __doc__.split("Randomness")[1].strip(),
            "versions": {
                "spectraclass": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "started": self.started,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "artifacts": list(self.artifacts),
            **self.extra,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, default=str)


def _load_inputs(cfg: RunConfig) -> SpectraSet:
    if not cfg.input_a or not cfg.input_b:
        raise ValueError("--input-a and --input-b are required")
    return merge(load_spectra(cfg.input_a, 1), load_spectra(cfg.input_b, 0))


def _prepared(cfg: RunConfig, data: SpectraSet, run: Run) -> SpectraSet:
    if cfg.skip_preprocess:
        run.extra["rejected"] = []
        return data
    sg = SGConfig(cfg.sg_window, cfg.sg_order)
    clean, rejected = preprocess(data, sg=sg, outlier_k=cfg.outlier_k)
    run.extra["rejected"] = [int(i) for i in rejected]
    return clean


def cmd_synth(args) -> int:
    cfg = RunConfig(seed=args.seed, out=args.out)
    run = Run("synth", cfg)
    r1, r2 = synth_preset(args.preset)
    data = generate(r1, r2, args.n, seed=stream(args.seed, 0), names=PRESET_NAMES[args.preset])
    first, second = split_by_label(data)
    for part, name in ((first, data.sample_names[0]), (second, data.sample_names[1])):
        save_spectra(run.path(f"{name}.csv"), part)
    run.extra.update(preset=args.preset, n_per_class=args.n)
    run.manifest("ok")
    print(f"wrote {run.out / (data.sample_names[0] + '.csv')} and {run.out / (data.sample_names[1] + '.csv')}")
    return 0


def cmd_preprocess(cfg: RunConfig) -> int:
    data = _load_inputs(cfg)
    run = Run("preprocess", cfg)
    try:
        clean = _prepared(cfg, data, run)
        first, second = split_by_label(clean)
        for part, name in ((first, clean.sample_names[0]), (second, clean.sample_names[1])):
            save_spectra(run.path(f"{name}.csv"), part)
    except Exception as exc:
        run.manifest("failed", str(exc))
        raise
    run.manifest("ok")
    print(f"rejected {len(run.extra['rejected'])} of {data.n} spectra")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    data = _load_inputs(cfg)
    run = Run("evaluate", cfg)
    try:
        clean = _prepared(cfg, data, run)
        reports = []
        methods = [m for m in METHOD_ORDER if m in cfg.methods]
        for region in cfg.regions:
            rk = REGION_KEYS[region]
            part = extract_region(clean, REGIONS[region])
            plan = make_folds(part.n, cfg.folds, stream(cfg.seed, 1, rk), labels=part.labels)
            for name in methods:
                rep = cross_validate(_method(cfg, name), part, plan, region,
                                     seed=stream(cfg.seed, 2, rk, METHOD_ORDER.index(name)),
                                     n_jobs=cfg.jobs)
                rep.seed = cfg.seed
                rep.to_json(run.path(f"report_{name}_{region}.json"))
                rep.roc_csv(run.path(f"roc_{name}_{region}.csv"))
                reports.append(rep)
                print(f"{region} {name}: AUC {rep.mean_auc:.3f} +/- {rep.sem:.3f}", file=sys.stderr)
        table = summary_table(reports)
        run.path("summary.csv").write_text(table.to_csv(), encoding="utf-8")
        run.path("summary.txt").write_text(table.to_text(), encoding="utf-8")
    except Exception as exc:
        run.manifest("failed", str(exc))
        raise
    run.manifest("ok")
    print(table.to_text(), end="")
    return 0


def _split(labels: np.ndarray, test_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    test = []
    for lab in (1, 0):
        idx = rng.permutation(np.flatnonzero(labels == lab))
        n_test = min(max(1, int(round(test_fraction * idx.size))), idx.size - 1)
        test.append(idx[:n_test])
    test = np.sort(np.concatenate(test))
    return np.setdiff1d(np.arange(labels.size), test), test


def cmd_explain(cfg: RunConfig) -> int:
    wanted = [m for m in ("lrp", "cnn") if m in cfg.methods]
    if not wanted:
        raise ValueError("explain needs lrp and/or cnn among --methods")
    data = _load_inputs(cfg)
    run = Run("explain", cfg)
    try:
        clean = _prepared(cfg, data, run)
        for region in cfg.regions:
            rk = REGION_KEYS[region]
            part = extract_region(clean, REGIONS[region])
            tr, te = _split(part.labels, cfg.test_fraction, stream(cfg.seed, 3, rk))
            train, test = part.subset(tr), part.subset(te)
            run.extra.setdefault("test_indices", {})[region] = te.tolist()
            if "lrp" in wanted:
                model = _method(cfg, "lrp").fit(train)
                spec = model.pooling
                rep = permutation_importance(
                    model.logistic, model.features(test), test.labels, cfg.n_perm,
                    seed=stream(cfg.seed, 4, rk), names=spec.labels(test.wavenumbers),
                )
                rep.to_csv(run.path(f"importance_{region}.csv"))
                write_json(run.path(f"importance_{region}.json"), rep.to_dict())
                write_json(run.path(f"model_lrp_{region}.json"), {"kind": "lrp", **model.to_dict()})
                if cfg.gnuplot:
                    run.path(f"importance_{region}.gp").write_text(
                        gnuplot_script(f"importance_{region}.csv", "importance"), encoding="utf-8")
                print(f"{region} top sub-band: {rep.top()}", file=sys.stderr)
            if "cnn" in wanted:
                model = _method(cfg, "cnn").fit(train, seed=stream(cfg.seed, 2, rk, 4))
                sal = saliency_map(model, test, cfg.ecdf)
                sal.to_csv(run.path(f"saliency_{region}.csv"))
                write_json(run.path(f"saliency_{region}.json"), sal.to_dict())
                write_json(run.path(f"model_cnn_{region}.json"), {"kind": "cnn", **model.to_dict()})
                model.write_trace(run.path(f"trace_cnn_{region}.csv"))
                if cfg.gnuplot:
                    run.path(f"saliency_{region}.gp").write_text(
                        gnuplot_script(f"saliency_{region}.csv", "saliency"), encoding="utf-8")
    except Exception as exc:
        run.manifest("failed", str(exc))
        raise
    run.manifest("ok")
    return 0


# --------------------------------------------------------------------------
# argument handling

_LIST = {"regions", "methods"}


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_run_flags(p: argparse.ArgumentParser, explain: bool) -> None:
    # defaults are None so that a config file can fill what the flags leave out
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--input-a", help="spectra CSV of the first sample (label 1)")
    p.add_argument("--input-b", help="spectra CSV of the second sample (label 0)")
    p.add_argument("--region", dest="regions", help="LW, HW or LW,HW (default both)")
    p.add_argument("--methods", help="comma list from lra,l2d,lrp,pca,cnn")
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--sg-window", type=int)
    p.add_argument("--sg-order", type=int)
    p.add_argument("--outlier-k", type=float)
    p.add_argument("--skip-preprocess", action="store_true", default=None,
                   help="inputs are already cleaned and smoothed")
    p.add_argument("--pool-cuts", help="interior sub-band cut points, e.g. 230,330,480")
    p.add_argument("--pca-components", type=int)
    p.add_argument("--shrinkage", type=float)
    p.add_argument("--inner-folds", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--cnn-dtype", choices=["float32", "float64"])
    p.add_argument("--jobs", type=int, help="worker processes for the folds")
    if explain:
        p.add_argument("--n-perm", type=int)
        p.add_argument("--test-fraction", type=float)
        p.add_argument("--ecdf", choices=["pooled", "per_wavenumber"])
        p.add_argument("--gnuplot", action="store_true", default=None)


def _read_config(path: str) -> dict:
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[run]\n" + fh.read())
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def _coerce(name: str, value, default):
    if name in _LIST or name == "pool_cuts":
        items = _csv_list(value) if isinstance(value, str) else list(value)
        return [float(x) for x in items] if name == "pool_cuts" else items
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    base = asdict(RunConfig())
    values = {}
    if getattr(args, "config", None):
        values.update(_read_config(args.config))
    values.update({k: v for k, v in vars(args).items() if v is not None and k in base})
    unknown = set(values) - set(base)
    if unknown:
        raise ValueError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
    return RunConfig(**{k: _coerce(k, v, base[k]) for k, v in values.items()} | {
        k: v for k, v in base.items() if k not in values})


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectraclass", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic pair of spectra files")
    p.add_argument("--preset", choices=PRESETS, default="colon_like")
    p.add_argument("--n", type=int, default=200, help="spectra per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth")

    p = sub.add_parser("preprocess", help="reject outliers and smooth, then write cleaned files")
    _add_run_flags(p, explain=False)
    p = sub.add_parser("evaluate", help="cross-validated AUC of each method and region")
    _add_run_flags(p, explain=False)
    p = sub.add_parser("explain", help="importance scores and saliency maps on a held-out split")
    _add_run_flags(p, explain=True)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = build_config(args)
        return {"preprocess": cmd_preprocess, "evaluate": cmd_evaluate,
                "explain": cmd_explain}[args.command](cfg)
    except Exception as exc:  # reported, not re-raised: the exit code carries the failure
        print(f"spectraclass {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
