import numpy as np
import pytest

from uhrbat.artifacts import (
    MetadataError,
    decode_pgm,
    encode_metadata,
    encode_pgm,
    mask_from_metadata,
    read_metadata,
    write_metadata,
)
from uhrbat.core import RegionPartition
from uhrbat.preserve_merge import compress_scale, keep_mask
from uhrbat.report import RunReport, ScaleEntry, compression_ratio, format_ratio


def _example_seq(budget=3):
    part = RegionPartition(np.array([0, 0, 1, 1, 1]), 2)
    return compress_scale(np.eye(5), [0.9, 0.1, 0.5, 0.4, 0.3], part, budget)


def test_metadata_roundtrip(tmp_path):
    seq = _example_seq()
    write_metadata(tmp_path / "m.txt", seq)
    recs = read_metadata(tmp_path / "m.txt")
    assert [r["kind"] for r in recs] == ["kept", "merged", "kept"]
    assert [r["sources"] for r in recs] == [[0], [1], [2]]
    assert encode_metadata(seq).count(b"\n") == 3
    np.testing.assert_array_equal(mask_from_metadata(recs, 5), keep_mask(seq))


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        '{"kind":"kept","region":0,"score":1}',
        '{"kind":"weird","region":0,"sources":[0],"score":1}',
        '{"kind":"kept","region":0,"sources":[0,1],"score":1}',
        '{"kind":"merged","region":0,"sources":[],"score":1}',
    ],
)
def test_malformed_metadata(tmp_path, line):
    (tmp_path / "m.txt").write_text(line + "\n")
    with pytest.raises(MetadataError):
        read_metadata(tmp_path / "m.txt")


def test_mask_rejects_bad_sources():
    with pytest.raises(MetadataError):
        mask_from_metadata([{"kind": "kept", "sources": [7]}], 5)
    with pytest.raises(MetadataError):
        mask_from_metadata([{"kind": "kept", "sources": [1]}, {"kind": "merged", "sources": [1, 2]}], 5)


def test_pgm_roundtrip():
    img = np.array([[255, 128], [0, 255], [7, 9]], dtype=np.uint8)
    buf = encode_pgm(img)
    assert buf.startswith(b"P5\n2 3\n255\n")
    np.testing.assert_array_equal(decode_pgm(buf), img)


def test_ratio_table():
    # 131,328 input tokens against a range of budgets
    expected = {4000: "32.83", 5000: "26.27", 6000: "21.89", 8000: "16.42",
                10000: "13.13", 11000: "11.94", 12000: "10.94"}
    for b, text in expected.items():
        assert format_ratio(compression_ratio(131328, b)) == text


def test_report_totals():
    rep = RunReport([ScaleEntry(1, 2304, 30, 80, 70, 10), ScaleEntry(2, 9216, 40, 320, 300, 19)])
    assert rep.n_total == 11520 and rep.budget_total == 400 and rep.emitted_total == 399
    d = rep.to_dict()
    assert d["totals"]["ratio"] == "28.80" and "timing_ms" not in d
    assert [s["ratio"] for s in d["scales"]] == ["28.80", "28.80"]
    assert "28.80" in rep.format_text().splitlines()[-1]
    with pytest.raises(ValueError):
        compression_ratio(10, 0)
