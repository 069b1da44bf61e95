import filecmp

import numpy as np
import pytest

from twoaspect.data import (
    LABEL_HEADER,
    Video,
    expr_from_aus,
    generate_synthetic,
    load_dataset,
    prepare_videos,
    read_manifest,
    sanitize_video,
    split_videos,
    synthesize_video,
    write_dataset,
)
from twoaspect.errors import ParseError
from twoaspect.objectives import FrameLabels


def test_same_seed_is_byte_identical(tmp_path):
    a = generate_synthetic(3, 5, 11, tmp_path / "a")
    generate_synthetic(3, 5, 11, tmp_path / "b")
    names = sorted(p.name for p in a.root.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert len(match) == len(names) == 7 and not mismatch and not errors


def test_different_seed_differs(tmp_path):
    generate_synthetic(1, 4, 1, tmp_path / "a")
    generate_synthetic(1, 4, 2, tmp_path / "b")
    assert not filecmp.cmp(tmp_path / "a/vid000.frames.tamt", tmp_path / "b/vid000.frames.tamt", shallow=False)


def test_counts(small_dataset):
    man = read_manifest(small_dataset)
    assert len(man.entries) == 8
    assert all(e.frame_count == 16 for e in man.entries)
    videos = load_dataset(small_dataset / "manifest.csv")
    assert [v.frames.shape for v in videos] == [(16, 3, 32, 32)] * 8


def test_frames_in_unit_range(small_dataset):
    for v in load_dataset(small_dataset):
        assert v.frames.min() >= 0.0 and v.frames.max() <= 1.0


def test_expr_follows_first_three_aus():
    assert expr_from_aus([1, 0, 1] + [0] * 9) == 5
    rng = np.random.default_rng(0)
    _, labels = synthesize_video(20, 16, rng)
    assert all(lab.expr == expr_from_aus(lab.aus) for lab in labels)


def test_roundtrip_exact(tmp_path, rng):
    labels = [
        FrameLabels(0.1234, -0.5, 3, tuple(rng.integers(0, 2, 12).tolist())),
        FrameLabels(-5.0, -5.0, -1, (-1,) * 12),
    ]
    frames = rng.uniform(size=(2, 3, 8, 8)).astype(np.float32)
    write_dataset(tmp_path, [Video("clip", frames, np.array([4, 9]), labels)])
    (back,) = load_dataset(tmp_path)
    assert back.frames.tobytes() == frames.tobytes()
    assert back.labels == labels
    np.testing.assert_array_equal(back.frame_idx, [4, 9])


def test_sentinel_survives_load(small_dataset):
    videos = load_dataset(small_dataset)
    flat = [lab for v in videos for lab in v.labels]
    assert any(not lab.is_valid for lab in flat)
    assert any(lab.expr == -1 for lab in flat) or any(lab.valence == -5.0 for lab in flat)


def test_zero_sentinel_fraction_sanitize_is_identity(tmp_path):
    generate_synthetic(4, 12, 3, tmp_path, sentinel_fraction=0.0)
    for v in load_dataset(tmp_path):
        s = sanitize_video(v)
        assert s.labels == v.labels and s.frames.tobytes() == v.frames.tobytes()


def test_missing_frames_file_names_path(tmp_path):
    generate_synthetic(2, 3, 0, tmp_path)
    (tmp_path / "vid001.frames.tamt").unlink()
    with pytest.raises(FileNotFoundError, match="vid001.frames.tamt"):
        load_dataset(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError, match="manifest"):
        load_dataset(tmp_path / "nowhere")


def test_bad_label_row_reports_line(tmp_path):
    generate_synthetic(1, 3, 0, tmp_path)
    path = tmp_path / "vid000.labels.csv"
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace(",", ",x", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match=r"vid000.labels.csv:3"):
        load_dataset(tmp_path)


def test_label_header_shape():
    assert LABEL_HEADER[:5] == ["video_id", "frame_idx", "valence", "arousal", "expr"]
    assert LABEL_HEADER[-1] == "au12" and len(LABEL_HEADER) == 17


def test_count_mismatch(tmp_path):
    generate_synthetic(1, 3, 0, tmp_path)
    man = tmp_path / "manifest.csv"
    man.write_text(man.read_text().replace(",3,", ",4,"))
    with pytest.raises(ParseError, match="manifest says 4"):
        load_dataset(tmp_path)


def test_prepare_sanitizes_before_filtering():
    ok = FrameLabels(0.0, 0.0, 0, (0,) * 12)
    bad = FrameLabels(0.0, 0.0, -1, (0,) * 12)
    frames = np.zeros((12, 3, 4, 4), np.float32)
    shrinking = Video("a", frames, np.arange(12), [ok] * 9 + [bad] * 3)
    fine = Video("b", frames[:10], np.arange(10), [ok] * 10)
    assert [v.video_id for v in prepare_videos([shrinking, fine])] == ["b"]


def test_split_video_level():
    vids = [Video(f"v{i}", np.zeros((1, 3, 2, 2)), np.arange(1), []) for i in range(10)]
    train, val = split_videos(vids, 0.2, seed=0)
    assert len(val) == 2 and len(train) == 8
    assert {v.video_id for v in train}.isdisjoint(v.video_id for v in val)
    assert split_videos(vids, 0.0, seed=0) == (vids, [])
