import json
import math

import numpy as np
import pytest

import embforge


def test_vocab():
    assert embforge.vocab_size() == 779
    vocab = json.loads(embforge.vocab_json())
    assert "<ACT_SEP>" in json.dumps(vocab)


def test_quantize_roundtrip():
    assert embforge.quantize(0.0, 0.0, 1.0) == 0
    assert embforge.quantize(1.0, 0.0, 1.0) == 255
    assert embforge.dequantize(0, 0.0, 1.0) == pytest.approx(0.5 / 256)


def test_action_codec():
    text = embforge.encode_actions([[0, 0, 0, 0, 0, 0, 1]])
    assert text == "<aloc0><aloc0><aloc0><arot128><arot128><arot128><gripper1>"
    steps = [[0.2, 0.4, 0.6, 0.5, -1.0, 3.0, 0], [0.9, 0.1, 0.3, 0.0, 0.0, -3.0, 1]]
    back = embforge.decode_actions(embforge.encode_actions(steps))
    assert len(back) == 2
    for want, got in zip(steps, back):
        for a in range(3):
            assert abs(want[a] - got[a]) <= 0.5 / 256 + 1e-12
        for a in range(3, 6):
            assert abs(want[a] - got[a]) <= math.pi / 256 + 1e-12
        assert want[6] == got[6]


def test_box_codec_and_iou():
    text = embforge.encode_box([0.1, 0.2, 0.3], [0.4, 0.5, 0.6])
    lo, hi = embforge.decode_box(text)
    assert lo[0] == pytest.approx(0.1, abs=1 / 256)
    assert hi[2] == pytest.approx(0.6, abs=1 / 256)
    assert embforge.iou3d([0, 0, 0], [1, 1, 1], [0, 0, 0], [1, 1, 1]) == pytest.approx(1.0)
    assert embforge.iou3d([0, 0, 0], [1, 1, 1], [0.5, 0, 0], [1.5, 1, 1]) == pytest.approx(1 / 3)


def test_parse_error_carries_index():
    assert embforge.canonicalize("<obj> cup </obj><loc1><loc2><loc3><loc4><loc5><loc6>")
    with pytest.raises(embforge.ParseError) as err:
        embforge.canonicalize("<obj> cup")
    assert err.value.index >= 0
    assert isinstance(err.value, ValueError)


def test_unproject_matches_pinhole():
    depth = np.full((4, 6), 2.0)
    depth[0, 0] = np.nan
    pts = embforge.unproject(depth, 10.0, 10.0, 3.0, 2.0)
    assert pts.shape == (23, 3)
    # Row-major order with pixel (0, 0) missing puts pixel (1, 0) first; rays pass through pixel centres.
    assert pts[0] == pytest.approx([(1.5 - 3.0) * 2.0 / 10.0, (0.5 - 2.0) * 2.0 / 10.0, 2.0])


def test_align_depth_scales():
    base = np.linspace(1.0, 2.0, 32 * 24).reshape(24, 32)
    background = np.ones((24, 32), dtype=bool)
    coeffs = embforge.align_depth_scales([base, base * 2.0], background)
    assert coeffs[0] == pytest.approx(1.0)
    assert coeffs[1] == pytest.approx(0.5)


def test_fixture_annotate_validate(tmp_path):
    manifests = embforge.make_fixture(tmp_path / "fx", episodes=2, frames=6, width=64, height=48)
    assert len(manifests) == 2
    summary = embforge.load_episode(manifests[0])
    assert summary["frames"] == 6
    assert summary["detections"] > 0

    report = embforge.annotate(manifests, tmp_path / "out", {"seed": 5, "workers": 2})
    assert report["total_samples"] > 0
    assert len(report["episodes"]) == 2

    checked = embforge.validate(tmp_path / "out")
    assert checked["violations"] == []
    assert checked["total_samples"] == report["total_samples"]

    counts = embforge.stats(tmp_path / "out")
    assert counts["total"] == report["total_samples"]
    assert set(counts["by_task"]) == set(report["task_counts"])


def test_load_error_names_field(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"schema_version": 1}))
    with pytest.raises(embforge.EpisodeLoadError) as err:
        embforge.load_episode(tmp_path / "m.json")
    assert err.value.field == "id"


def test_bad_option_is_rejected(tmp_path):
    with pytest.raises(Exception):
        embforge.annotate([], tmp_path, {"no.such.key": 1})
