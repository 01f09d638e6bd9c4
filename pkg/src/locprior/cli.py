"""Command-line entry point: ``locprior {gen,localize,eval,bench}``.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .bench import PipelineConfig, prior_box
from .dataset import load_manifest, load_reference_set, load_truth, missing_files, write_dataset
from .errors import LocPriorError, ValidationError
from .estimator import SIZE_TEMPERATURE, localize
from .features import FeatureConfig, extract_features
from .geometry import CameraIntrinsics, recover_translation
from .imageio import heatmap_to_gray, read_ppm, write_pgm
from .metrics import EvalRecord, map_50_95, per_threshold_ap
from .multiscale import KernelDistributionConfig
from .perf import compare_strategies, default_fixture, report_csv, report_json
from .synthetic import BenchConfig, dumps

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3

DEFAULT_INTRINSICS = CameraIntrinsics(fx=256.0, fy=256.0, cx=128.0, cy=128.0, f_virtual=256.0, s_3d=0.1)

LOCALIZE_SCHEMA = {
    "type": "object",
    "required": ["query", "location_prior", "translation"],
    "additionalProperties": False,
    "properties": {
        "query": {"type": "string"},
        "location_prior": {
            "type": "object",
            "required": ["center", "size", "confidence", "best_reference"],
            "additionalProperties": False,
            "properties": {
                "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "size": {"type": "number", "exclusiveMinimum": 0},
                "confidence": {"type": "number"},
                "best_reference": {"type": "integer", "minimum": 0},
            },
        },
        "translation": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    },
}


@dataclass(frozen=True)
class PerfSettings:
    repeats: int = 9
    warmup: int = 2
    n_images: int = 3


@dataclass(frozen=True)
class RunConfig:
    references_dir: str = "dataset/references/obj_000"
    queries_dir: str = "dataset"
    output_dir: str = "out"
    kernels: KernelDistributionConfig = KernelDistributionConfig()
    features: FeatureConfig = FeatureConfig()
    k: int = 3
    tau: float = SIZE_TEMPERATURE
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    seed: int = 0
    dataset: BenchConfig = BenchConfig()
    perf: PerfSettings = PerfSettings()

    def __post_init__(self):
        if self.k < 0:
            raise ValidationError(f"k must be >= 0, got {self.k}")
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        if self.perf.repeats < 1 or self.perf.warmup < 0 or self.perf.n_images < 1:
            raise ValidationError("perf needs repeats >= 1, warmup >= 0, n_images >= 1")

    @property
    def bench(self) -> BenchConfig:
        return replace(self.dataset, seed=self.seed)

    @property
    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.features, self.kernels, self.k, self.tau)

    def to_json(self) -> dict:
        ds = self.dataset.to_json()
        del ds["seed"]
        return {"paths": {"references_dir": self.references_dir, "queries_dir": self.queries_dir,
                          "output_dir": self.output_dir},
                "kernels": self.kernels.to_json(), "features": asdict(self.features), "k": self.k,
                "tau": self.tau, "intrinsics": self.intrinsics.to_json(), "seed": self.seed,
                "dataset": ds, "perf": asdict(self.perf)}

    @classmethod
    def from_json(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ValidationError("config must be a JSON object")
        known = {"paths", "kernels", "features", "k", "tau", "intrinsics", "seed", "dataset", "perf"}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        base = cls()
        try:
            paths = d.get("paths", {})
            ds = dict(d.get("dataset", {}))
            if "seed" in ds:
                raise ValidationError("dataset.seed is not allowed; use the top-level seed")
            return cls(
                references_dir=str(paths.get("references_dir", base.references_dir)),
                queries_dir=str(paths.get("queries_dir", base.queries_dir)),
                output_dir=str(paths.get("output_dir", base.output_dir)),
                kernels=KernelDistributionConfig.from_json(d["kernels"]) if "kernels" in d else base.kernels,
                features=FeatureConfig(**d["features"]) if "features" in d else base.features,
                k=int(d.get("k", base.k)),
                tau=float(d.get("tau", base.tau)),
                intrinsics=CameraIntrinsics.from_json(d["intrinsics"]) if "intrinsics" in d else base.intrinsics,
                seed=int(d.get("seed", base.seed)),
                dataset=BenchConfig.from_json({**base.dataset.to_json(), **ds}),
                perf=PerfSettings(**{**asdict(base.perf), **d.get("perf", {})}),
            )
        except (TypeError, ValueError, KeyError, AttributeError) as e:
            if isinstance(e, LocPriorError):
                raise
            raise ValidationError(f"invalid config: {e}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    text = Path(path).read_text()
    try:
        return RunConfig.from_json(json.loads(text))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON ({e})") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="locprior", description="Location priors for unseen objects by multi-scale template matching.")
    p.add_argument("--print-config", action="store_true", help="print the effective config as JSON and exit")
    p.add_argument("--config", help="JSON run config (see --print-config for the schema and defaults)")
    p.add_argument("--seed", type=int, help="override the config seed")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic benchmark dataset")
    g.add_argument("--out", help="dataset directory (default: config queries_dir)")
    g.add_argument("--n-objects", type=int)
    g.add_argument("--n-queries", type=int)
    g.add_argument("--n-refs", type=int)

    lo = sub.add_parser("localize", help="location prior and translation for one query image")
    lo.add_argument("query", help="query image (binary PPM)")
    lo.add_argument("--references", help="reference directory (default: config references_dir)")
    lo.add_argument("--heatmap", help="write the fused correlation map as PGM")
    lo.add_argument("--output", help="write the JSON result here instead of standard output")

    ev = sub.add_parser("eval", help="localize every query of a dataset and score it")
    ev.add_argument("dataset", nargs="?", help="dataset directory (default: config queries_dir)")
    ev.add_argument("--out", help="output directory (default: config output_dir)")
    ev.add_argument("--oracle-predictions", action="store_true",
                    help="score the ground truth itself instead of running the localizer")

    b = sub.add_parser("bench", help="MAC and wall-clock comparison of the two multi-scale strategies")
    b.add_argument("--out", help="output directory (default: config output_dir)")
    b.add_argument("--repeats", type=int)
    b.add_argument("--warmup", type=int)
    b.add_argument("--n-images", type=int)
    return p


def cmd_gen(cfg: RunConfig, args) -> int:
    bench = cfg.bench
    over = {k: v for k, v in (("n_objects", args.n_objects), ("n_queries", args.n_queries),
                              ("n_refs", args.n_refs)) if v is not None}
    if any(v < 1 for v in over.values()):
        raise ValidationError("counts must be >= 1")
    bench = replace(bench, **over)
    out = Path(args.out or cfg.queries_dir)
    m = write_dataset(out, bench, cfg.features)
    print(f"wrote {len(m['images'])} images ({bench.n_objects} objects x {bench.n_queries} queries, "
          f"{bench.n_refs} references each) to {out}")
    return EXIT_OK


def localize_one(cfg: RunConfig, query_path, refs, heatmap=None) -> dict:
    img = read_ppm(query_path)
    fm = extract_features(img, cfg.features)
    if len(refs) <= cfg.k:
        raise ValidationError(f"k={cfg.k} needs more than {cfg.k} references, found {len(refs)}")
    prior, fused = localize(fm, refs, cfg.kernels, cfg.k, cfg.tau, return_maps=True)
    if heatmap:
        write_pgm(heatmap, heatmap_to_gray(fused))
    t = recover_translation(prior.center, prior.size, cfg.intrinsics)
    return {"query": str(query_path), "location_prior": prior.to_json(), "translation": [float(x) for x in t]}


def cmd_localize(cfg: RunConfig, args) -> int:
    ref_dir = Path(args.references or cfg.references_dir)
    if not ref_dir.is_dir():
        raise FileNotFoundError(f"reference directory not found: {ref_dir}")
    refs = load_reference_set(ref_dir, cfg.features)
    if len(refs) == 0:
        raise ValidationError(f"{ref_dir}: no reference views")
    res = localize_one(cfg, args.query, refs, args.heatmap)
    text = json.dumps(res, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
        p = res["location_prior"]
        print(f"center=({p['center'][0]:.1f}, {p['center'][1]:.1f}) size={p['size']:.1f} "
              f"translation={res['translation']}")
    else:
        print(text)
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    root = Path(args.dataset or cfg.queries_dir)
    manifest = load_manifest(root)
    missing = missing_files(root, manifest)
    if missing:
        raise FileNotFoundError("dataset is missing files:\n  " + "\n  ".join(missing))
    records, rows = [], []
    for obj in manifest["objects"]:
        refs = None if args.oracle_predictions else load_reference_set(root / obj["references"], cfg.features)
        for q in obj["queries"]:
            truth = load_truth(root / q["truth"])
            if args.oracle_predictions:
                pred, conf = truth, 1.0
            else:
                p = localize(extract_features(read_ppm(root / q["image"]), cfg.features), refs, cfg.kernels,
                             cfg.k, cfg.tau)
                pred, conf = prior_box(p), p.confidence
            rec = EvalRecord.make(pred, conf, truth)
            records.append(rec)
            rows.append({"image": q["image"], **rec.to_json()})
    ce = [float(np.hypot(r.predicted.u - r.truth.u, r.predicted.v - r.truth.v)) for r in records]
    se = [abs(r.predicted.size - r.truth.size) / r.truth.size for r in records]
    metrics = {"map_50_95": map_50_95(records), "per_threshold_ap": per_threshold_ap(records),
               "center_mae_px": float(np.mean(ce)), "size_rel_mae": float(np.mean(se)),
               "n_records": len(records)}
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.json").write_text(dumps(rows) + "\n")
    (out / "metrics.json").write_text(dumps(metrics) + "\n")
    print(f"mAP@[.5:.95] {metrics['map_50_95']:.2f}%  center MAE {metrics['center_mae_px']:.2f} px  "
          f"size rel. MAE {100 * metrics['size_rel_mae']:.1f}%  ({len(records)} queries)")
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    perf = replace(cfg.perf, **{k: v for k, v in (("repeats", args.repeats), ("warmup", args.warmup),
                                                   ("n_images", args.n_images)) if v is not None})
    cfg = replace(cfg, perf=perf)  # re-validates
    fixture = default_fixture(perf.n_images, cfg.bench, cfg.features)
    pairs = compare_strategies((1, 2, 3, 4, 5), fixture, perf.repeats, perf.warmup)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(report_json(pairs, cfg.to_json()) + "\n")
    (out / "bench.csv").write_text(report_csv(pairs))
    print(f"{'n':>2} {'strategy':<20} {'total MACs':>12} {'backbone passes':>15} {'median ms':>10}")
    for pair in pairs:
        for r in pair:
            print(f"{r.n_scales:>2} {r.strategy:<20} {r.total_macs:>12} {r.backbone_passes:>15} "
                  f"{r.wall_ns / 1e6:>10.1f}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "localize": cmd_localize, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.print_config:
            print(cfg.dumps())
            return EXIT_OK
        if args.command is None:
            parser.error("a command is required")
        return COMMANDS[args.command](cfg, args)
    except OSError as e:
        print(f"locprior: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (LocPriorError, ValueError) as e:
        print(f"locprior: invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
