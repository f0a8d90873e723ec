import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from uhrbat.core import RegionPartition
from uhrbat.oracle import dump_instance
from uhrbat.tensorio import write_uhrt

FAILURE_DIR = Path(os.environ.get("UHRBAT_FAILURE_DIR", ".uhrbat-failures"))

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[n]
        line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


def random_partition(rng, n, n_regions):
    """Random labels with every region non-empty (requires n_regions <= n)."""
    labels = np.concatenate([np.arange(n_regions), rng.integers(0, n_regions, n - n_regions)])
    rng.shuffle(labels)
    return RegionPartition(labels, n_regions)


def random_scores(rng, n):
    """Continuous, tie-heavy or float-rounding-prone scores, chosen at random."""
    mode = rng.integers(3)
    if mode == 0:
        return rng.random(n)
    if mode == 1:
        return rng.integers(0, 4, n).astype(float)
    return rng.integers(1, 4, n) * 0.1


def dump_failure(name, **arrays):
    return dump_instance(FAILURE_DIR, name, **arrays)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def order_violations(seq, mu):
    """Positions breaking the serialization contract, given per-region means ``mu``.

    Groups must appear once each in non-increasing mean order (ties by region
    id), kept scores must not increase inside a group, and a merged record
    must close its group.
    """
    bad = []
    seen = set()
    for j in range(len(seq)):
        r = int(seq.regions[j])
        new_group = j == 0 or int(seq.regions[j - 1]) != r
        if new_group:
            if r in seen:
                bad.append(j)
            seen.add(r)
            if j > 0:
                prev = int(seq.regions[j - 1])
                if (mu[prev], -prev) < (mu[r], -r):
                    bad.append(j)
        else:
            if seq.kinds[j - 1] == 1:
                bad.append(j)
            elif seq.kinds[j] == 0 and seq.scores[j] > seq.scores[j - 1]:
                bad.append(j)
    return bad


def first_moment_error(features, indices, merged):
    """Max elementwise gap between the member sum and ``len * merged``, relative to the absolute sum."""
    rows = np.asarray(features)[np.asarray(indices)]
    total = np.zeros(rows.shape[1])
    scale = np.zeros(rows.shape[1])
    for row in rows:
        total += row
        scale += np.abs(row)
    gap = np.abs(total - len(rows) * np.asarray(merged))
    return float((gap / np.maximum(scale, np.finfo(float).tiny)).max())


def write_run(root, grids, budgets, *, d=3, seed=0, k=4, attention=None, partition=None,
              policy="preset", total=None, rng=None):
    """Synthetic tensors plus a manifest; returns the manifest path."""
    rng = rng or np.random.default_rng(0)
    root.mkdir(parents=True, exist_ok=True)
    scales = []
    for s, (r, c) in enumerate(grids, start=1):
        write_uhrt(root / f"f{s}.uhrt", rng.normal(size=(r * c, d)).astype(np.float32))
        scales.append({"rows": r, "cols": c, "features": f"f{s}.uhrt"})
    n1 = grids[0][0] * grids[0][1]
    attn = rng.random((3, n1)) if attention is None else attention
    write_uhrt(root / "attn.uhrt", np.asarray(attn, dtype=np.float32))
    budget = {"policy": policy}
    if budgets is not None:
        budget["per_scale"] = list(budgets)
    if total is not None:
        budget["total"] = total
    manifest = {
        "seed": seed,
        "scales": scales,
        "attention": "attn.uhrt",
        "budget": budget,
        "partition": partition or {"k": k, "max_iters": 20},
    }
    path = root / "run.yaml"
    path.write_text(yaml.safe_dump(manifest, sort_keys=False))
    return path


def artifacts(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "timing.json"}
