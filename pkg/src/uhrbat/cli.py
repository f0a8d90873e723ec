"""Command-line front end.

    uhrbat compress  --manifest run.yaml --out out/ [--threads N] [--strict-budget]
    uhrbat partition --features f.uhrt --rows R --cols C --k K --seed S --out labels.uhrt
    uhrbat mask      --meta out/1.meta.txt --rows R --cols C --out mask.pgm
    uhrbat ratios    --total 131328 --budgets 4000 5000 6000

Exit codes: 0 ok, 2 invalid manifest/arguments/metadata, 3 tensor I/O
failure, 4 infeasible budget.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import kernels
from .artifacts import (
    MetadataError,
    encode_metadata,
    encode_pgm,
    mask_from_metadata,
    read_metadata,
    write_pgm,
)
from .core import (
    BudgetWarning,
    InfeasibleBudgetError,
    TokenGrid,
    UHRBatError,
)
from .multiscale import (
    DEFAULT_PATCH_SIZE,
    EmbeddingTables,
    MultiScaleResult,
    ScaleSpec,
    ScaleView,
    compress_multiscale,
)
from .partition import PartitionConfig, PixelLabelMap, partition_tokens
from .preserve_merge import keep_mask
from .report import RunReport, ScaleEntry, compression_ratio, format_ratio
from .tensorio import (
    TensorFormatError,
    atomic_write_bytes,
    encode_uhrt,
    read_features,
    read_labels,
    write_uhrt,
)

log = logging.getLogger("uhrbat")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_BUDGET = 4


class ManifestError(UHRBatError, ValueError):
    pass


@dataclass
class ScaleEntrySpec:
    features: Path
    rows: int
    cols: int
    resolution: int | None = None
    budget: int | None = None
    pixel_labels: Path | None = None


@dataclass
class Manifest:
    scales: list[ScaleEntrySpec]
    attention: Path
    partition: PartitionConfig
    policy: str = "preset"
    global_budget: int | None = None
    patch_size: int = DEFAULT_PATCH_SIZE
    base_pe: Path | None = None
    scale_embeddings: Path | None = None
    strict_budget: bool = False
    output_dir: Path | None = None
    extra: dict[str, Any] = field(default_factory=dict)


_PARTITION_KEYS = {"method", "k", "lambda_f", "lambda_xy", "max_iters", "tol", "background_label"}


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ManifestError(f"{where}: missing required key {key!r}")
    return d[key]


def load_manifest(path: str | os.PathLike) -> Manifest:
    """Parse a YAML (or JSON) run manifest.  Relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ManifestError(f"manifest {path} is not valid YAML/JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError("manifest must be a mapping")
    base = path.parent

    def rel(p) -> Path:
        if not isinstance(p, str):
            raise ManifestError(f"expected a path string, got {p!r}")
        q = Path(p)
        return q if q.is_absolute() else base / q

    try:
        patch = int(raw.get("patch_size", DEFAULT_PATCH_SIZE))
        budget = raw.get("budget") or {}
        policy = budget.get("policy", "preset")
        if policy not in ("preset", "proportional"):
            raise ManifestError(f"unknown budget policy {policy!r}")
        per_scale = budget.get("per_scale")
        total = budget.get("total")
        scales_raw = _require(raw, "scales", "manifest")
        if not isinstance(scales_raw, list) or not scales_raw:
            raise ManifestError("'scales' must be a non-empty list")
        if per_scale is not None and len(per_scale) != len(scales_raw):
            raise ManifestError("budget.per_scale needs one entry per scale")
        if policy == "preset" and per_scale is None:
            raise ManifestError("preset policy needs budget.per_scale")
        if policy == "proportional" and total is None:
            raise ManifestError("proportional policy needs budget.total")

        scales = []
        for i, sc in enumerate(scales_raw):
            where = f"scales[{i}]"
            if not isinstance(sc, dict):
                raise ManifestError(f"{where} must be a mapping")
            res = sc.get("resolution")
            if "rows" in sc or "cols" in sc:
                rows, cols = int(_require(sc, "rows", where)), int(_require(sc, "cols", where))
            elif res is not None:
                if int(res) % patch:
                    raise ManifestError(f"{where}: resolution {res} not a multiple of patch {patch}")
                rows = cols = int(res) // patch
            else:
                raise ManifestError(f"{where}: give 'resolution' or 'rows'/'cols'")
            scales.append(ScaleEntrySpec(
                features=rel(_require(sc, "features", where)),
                rows=rows,
                cols=cols,
                resolution=None if res is None else int(res),
                budget=None if per_scale is None else int(per_scale[i]),
                pixel_labels=rel(sc["pixel_labels"]) if sc.get("pixel_labels") else None,
            ))

        part_raw = dict(raw.get("partition") or {})
        unknown = set(part_raw) - _PARTITION_KEYS
        if unknown:
            raise ManifestError(f"unknown partition keys {sorted(unknown)}")
        seed = int(raw.get("seed", 0))
        cfg = PartitionConfig(seed=seed, **part_raw)
        if cfg.method == "external_labels" and any(s.pixel_labels is None for s in scales):
            raise ManifestError("external_labels partition needs pixel_labels on every scale")

        emb = raw.get("embeddings") or {}
        out = raw.get("output_dir")
        return Manifest(
            scales=scales,
            attention=rel(_require(raw, "attention", "manifest")),
            partition=cfg,
            policy=policy,
            global_budget=None if total is None else int(total),
            patch_size=patch,
            base_pe=rel(emb["base_pe"]) if emb.get("base_pe") else None,
            scale_embeddings=rel(emb["scale_embeddings"]) if emb.get("scale_embeddings") else None,
            strict_budget=bool(raw.get("strict_budget", False)),
            output_dir=rel(out) if out else None,
        )
    except ManifestError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise ManifestError(f"invalid manifest: {exc}") from exc


def _load_inputs(m: Manifest):
    """Read every tensor the manifest references; nothing is written before this succeeds."""
    views = []
    for s, spec in enumerate(m.scales, start=1):
        feats = read_features(spec.features)
        if feats.ndim == 3:
            feats = feats.reshape(-1, feats.shape[-1])
        if feats.ndim != 2 or feats.shape[0] != spec.rows * spec.cols:
            raise ManifestError(
                f"scale {s}: features {spec.features} have shape {feats.shape}, "
                f"expected ({spec.rows * spec.cols}, d)"
            )
        label_map = None
        if spec.pixel_labels is not None:
            label_map = PixelLabelMap(read_labels(spec.pixel_labels), m.patch_size)
        grid = TokenGrid(spec.rows, spec.cols, scale_id=s)
        views.append(ScaleView(feats, ScaleSpec(s, grid, spec.resolution, spec.budget), label_map))
    attn = read_features(m.attention)
    tables = None
    if m.base_pe is not None or m.scale_embeddings is not None:
        if m.base_pe is None or m.scale_embeddings is None:
            raise ManifestError("embeddings need both base_pe and scale_embeddings")
        tables = EmbeddingTables(read_features(m.base_pe), read_features(m.scale_embeddings))
    return views, attn, tables


def build_report(result: MultiScaleResult) -> RunReport:
    entries = [
        ScaleEntry(
            scale_id=r.scale.scale_id,
            n_tokens=r.scale.n_tokens,
            n_regions=r.partition.n_regions,
            budget=r.budget,
            kept=r.sequence.n_kept,
            merged=r.sequence.n_merged,
        )
        for r in result.scales
    ]
    return RunReport(entries, dict(result.timing_ms))


def run_compress(manifest: Manifest, out_dir: Path, threads: int = 1,
                 strict: bool | None = None) -> RunReport:
    env_seed = os.environ.get("UHRBAT_SEED")
    cfg = manifest.partition
    if env_seed is not None and env_seed.strip():
        try:
            cfg = PartitionConfig(**{**cfg.__dict__, "seed": int(env_seed)})
        except ValueError as exc:
            raise ManifestError(f"UHRBAT_SEED={env_seed!r} is not an integer") from exc
    strict = manifest.strict_budget if strict is None else strict

    t0 = time.perf_counter()
    views, attn, tables = _load_inputs(manifest)
    load_ms = (time.perf_counter() - t0) * 1e3

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BudgetWarning)
        result = compress_multiscale(
            views, attn, tables, cfg,
            policy=manifest.policy, global_budget=manifest.global_budget,
            strict=strict, threads=threads,
        )
    for w in caught:
        log.warning("%s", w.message)

    report = build_report(result)
    report.timing_ms = {"load": load_ms, **report.timing_ms}

    # serialize everything in memory first, then move files into place one by one
    t0 = time.perf_counter()
    blobs: dict[str, bytes] = {}
    for r in result.scales:
        s = r.scale.scale_id
        blobs[f"{s}.feat.uhrt"] = encode_uhrt(r.sequence.features)
        blobs[f"{s}.meta.txt"] = encode_metadata(r.sequence)
        blobs[f"{s}.mask.pgm"] = encode_pgm(keep_mask(r.sequence).reshape(r.scale.grid.shape))
    blobs["report.json"] = (json.dumps(report.to_dict(), indent=2) + "\n").encode()
    for name, data in blobs.items():
        atomic_write_bytes(out_dir / name, data)
    report.timing_ms["write"] = (time.perf_counter() - t0) * 1e3
    atomic_write_bytes(out_dir / "timing.json",
                       (json.dumps({k: round(v, 3) for k, v in report.timing_ms.items()},
                                   indent=2) + "\n").encode())
    return report


def cmd_compress(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    out = Path(args.out) if args.out else manifest.output_dir
    if out is None:
        raise ManifestError("no output directory: pass --out or set output_dir")
    report = run_compress(manifest, out, threads=args.threads,
                          strict=True if args.strict_budget else None)
    print(report.format_text())
    print(f"backend={kernels.BACKEND} compression={format_ratio(report.ratio)}x "
          f"({report.n_total} -> budget {report.budget_total}, emitted {report.emitted_total})")
    return EXIT_OK


def cmd_partition(args: argparse.Namespace) -> int:
    grid = TokenGrid(args.rows, args.cols)
    if args.pixel_labels:
        cfg = PartitionConfig(method="external_labels", background_label=args.background_label)
        label_map = PixelLabelMap(read_labels(args.pixel_labels), args.patch_size)
        part = partition_tokens(None, grid, cfg, label_map)
    else:
        cfg = PartitionConfig(
            k=args.k, seed=args.seed, lambda_f=args.lambda_f, lambda_xy=args.lambda_xy,
            max_iters=args.max_iters, tol=args.tol,
        )
        feats = read_features(args.features)
        if feats.ndim == 3:
            feats = feats.reshape(-1, feats.shape[-1])
        part = partition_tokens(feats, grid, cfg)
    write_uhrt(args.out, part.labels.astype(np.int32))
    print(f"{part.n_tokens} tokens -> {part.n_regions} regions")
    return EXIT_OK


def cmd_mask(args: argparse.Namespace) -> int:
    if args.rows < 1 or args.cols < 1:
        raise MetadataError("grid must be at least 1x1")
    records = read_metadata(args.meta)
    mask = mask_from_metadata(records, args.rows * args.cols)
    write_pgm(args.out, mask.reshape(args.rows, args.cols))
    counts = {v: int((mask == v).sum()) for v in (255, 128, 0)}
    print(f"kept={counts[255]} merged={counts[128]} dropped={counts[0]}")
    return EXIT_OK


def cmd_ratios(args: argparse.Namespace) -> int:
    for b in args.budgets:
        print(f"{format_ratio(compression_ratio(args.total, b))}\t{b}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uhrbat", description="Budget-aware visual token compression.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="run the multi-scale pipeline from a manifest")
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", help="output directory (overrides manifest output_dir)")
    c.add_argument("--threads", type=int, default=1, help="scales processed concurrently")
    c.add_argument("--strict-budget", action="store_true",
                   help="fail (exit 4) when a scale budget is below its region count")
    c.set_defaults(func=cmd_compress)

    q = sub.add_parser("partition", help="k-means or label-map partition of one grid")
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--features", help="N x d feature tensor")
    src.add_argument("--pixel-labels", help="H x W i32 pixel label tensor")
    q.add_argument("--rows", type=int, required=True)
    q.add_argument("--cols", type=int, required=True)
    q.add_argument("--k", type=int, default=600)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--lambda-f", type=float, default=1.0)
    q.add_argument("--lambda-xy", type=float, default=0.5)
    q.add_argument("--max-iters", type=int, default=100)
    q.add_argument("--tol", type=float, default=1e-4)
    q.add_argument("--patch-size", type=int, default=DEFAULT_PATCH_SIZE)
    q.add_argument("--background-label", type=int, default=-1)
    q.add_argument("--out", required=True, help="output i32 label tensor")
    q.set_defaults(func=cmd_partition)

    m = sub.add_parser("mask", help="render a keep-mask PGM from a metadata sidecar")
    m.add_argument("--meta", required=True)
    m.add_argument("--rows", type=int, required=True)
    m.add_argument("--cols", type=int, required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mask)

    r = sub.add_parser("ratios", help="compression ratio for each budget")
    r.add_argument("--total", type=int, required=True)
    r.add_argument("--budgets", type=int, nargs="+", required=True)
    r.set_defaults(func=cmd_ratios)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ManifestError, MetadataError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except InfeasibleBudgetError as exc:
        log.error("infeasible budget: %s", exc)
        return EXIT_BUDGET
    except (OSError, TensorFormatError) as exc:
        log.error("tensor I/O failure: %s", exc)
        return EXIT_IO
    except UHRBatError as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
