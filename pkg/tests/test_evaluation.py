import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svdet.audio import FrameGrid
from svdet.errors import DataError
from svdet.evaluation import (Segment, confusion_counts, kfold_split,
                              load_labels, metrics, parse_label_file,
                              pooled_report, save_labels)
from svdet.tracks import LabelTrack

GRID_2S = FrameGrid(frame_len=640, hop=320, n_frames=99, sample_rate=16000)


def track(labels, grid=None):
    labels = np.asarray(labels, dtype=np.int8)
    grid = grid or FrameGrid(frame_len=640, hop=320, n_frames=len(labels),
                             sample_rate=16000)
    return LabelTrack(labels=labels, grid=grid)


class TestParseLabelFile:
    def test_basic_file(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("0.0 1.0 sing\n1.0 2.0 nosing\n")
        segs = parse_label_file(p)
        assert segs == [Segment(0.0, 1.0, 1), Segment(1.0, 2.0, 0)]

    def test_numeric_tokens(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("0 1 1\n1 2 0\n")
        assert [s.label for s in parse_label_file(p)] == [1, 0]

    def test_comments_and_blank_lines(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("# header\n\n0.5 1.5 sing\n")
        assert parse_label_file(p) == [Segment(0.5, 1.5, 1)]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("")
        assert parse_label_file(p) == []

    def test_non_monotone_segment(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("1.0 0.5 sing\n")
        with pytest.raises(DataError, match="non-monotone"):
            parse_label_file(p)

    def test_overlapping_segments(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("0.0 1.0 sing\n0.5 2.0 nosing\n")
        with pytest.raises(DataError, match="overlap"):
            parse_label_file(p)

    def test_bad_label_reports_line(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("0.0 1.0 sing\n1.0 2.0 speech\n")
        with pytest.raises(DataError, match=":2:"):
            parse_label_file(p)

    def test_bad_time_reports_line(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("zero 1.0 sing\n")
        with pytest.raises(DataError, match=":1:"):
            parse_label_file(p)


class TestLoadLabels:
    def test_first_second_vocal(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("0.0 1.0 sing\n")
        lab = load_labels(p, GRID_2S)
        centers = GRID_2S.frame_times()
        assert np.array_equal(lab.labels, (centers < 1.0).astype(np.int8))

    def test_empty_file_all_nonvocal(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("")
        assert np.all(load_labels(p, GRID_2S).labels == 0)

    def test_uncovered_time_defaults_nonvocal(self, tmp_path):
        p = tmp_path / "a.lab"
        p.write_text("1.5 1.8 sing\n")
        lab = load_labels(p, GRID_2S)
        centers = GRID_2S.frame_times()
        expect = ((centers >= 1.5) & (centers < 1.8)).astype(np.int8)
        assert np.array_equal(lab.labels, expect)

    @given(seed=st.integers(0, 3000))
    @settings(max_examples=30, deadline=None)
    def test_save_load_roundtrip(self, seed, tmp_path_factory):
        r = np.random.default_rng(seed)
        labels = r.integers(0, 2, 60).astype(np.int8)
        t = track(labels)
        path = tmp_path_factory.mktemp("rt") / "a.lab"
        save_labels(path, t)
        back = load_labels(path, t.grid)
        assert np.array_equal(back.labels, labels)


class TestConfusionAndMetrics:
    def test_hand_counts(self):
        pred = track([1, 1, 0, 0, 1, 0])
        truth = track([1, 0, 0, 1, 1, 0])
        assert confusion_counts(pred, truth) == (2, 2, 1, 1)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            confusion_counts(track([1, 0]), track([1]))

    def test_perfect_prediction(self):
        t = track([1, 0, 1, 1, 0])
        rep = metrics(confusion_counts(t, t))
        assert rep.accuracy == rep.precision == rep.recall == rep.f1 == 1.0
        assert rep.zero_division_flags == []

    def test_published_operating_point(self):
        # P = 0.865, R = 0.920 implies F1 = 0.892 (harmonic mean)
        tp = 865 * 920
        fp = round(tp / 0.865) - tp
        fn = round(tp / 0.920) - tp
        rep = metrics((tp, 0, fp, fn))
        assert rep.precision == pytest.approx(0.865, abs=1e-6)
        assert rep.recall == pytest.approx(0.920, abs=1e-6)
        assert rep.f1 == pytest.approx(0.892, abs=1e-3)

    def test_zero_division_flags(self):
        rep = metrics((0, 10, 0, 0))
        assert rep.precision == 0.0 and rep.recall == 0.0 and rep.f1 == 0.0
        assert set(rep.zero_division_flags) == {"precision", "recall", "f1"}
        assert rep.accuracy == 1.0

    def test_all_wrong(self):
        pred = track([1, 1, 0, 0])
        truth = track([0, 0, 1, 1])
        rep = metrics(confusion_counts(pred, truth))
        assert rep.accuracy == 0.0
        assert rep.f1 == 0.0

    def test_zero_total_error(self):
        with pytest.raises(DataError):
            metrics((0, 0, 0, 0))

    @given(tp=st.integers(0, 50), tn=st.integers(0, 50),
           fp=st.integers(0, 50), fn=st.integers(0, 50))
    @settings(max_examples=100, deadline=None)
    def test_swap_symmetry(self, tp, tn, fp, fn):
        if tp + tn + fp + fn == 0:
            return
        rep = metrics((tp, tn, fp, fn))
        swapped = metrics((tp, tn, fn, fp))  # swapping pred/truth swaps fp/fn
        assert rep.accuracy == swapped.accuracy
        assert rep.precision == swapped.recall
        assert rep.recall == swapped.precision
        assert 0.0 <= rep.f1 <= 1.0


class TestPooledReport:
    def test_micro_average_is_count_sum(self):
        counts = {"a": (5, 3, 1, 1), "b": (2, 6, 2, 0)}
        rep = pooled_report(counts)
        assert (rep.tp, rep.tn, rep.fp, rep.fn) == (7, 9, 3, 1)
        direct = metrics((7, 9, 3, 1))
        assert rep.f1 == direct.f1

    def test_macro_mean_row(self):
        counts = {"a": (10, 0, 0, 0), "b": (0, 10, 0, 0)}
        rep = pooled_report(counts)
        mean = rep.per_file["__mean__"]
        assert mean["accuracy"] == 1.0
        assert mean["f1"] == pytest.approx(0.5)  # file b flags f1 to 0

    def test_json_is_deterministic(self):
        counts = {"b": (1, 2, 3, 4), "a": (4, 3, 2, 1)}
        assert pooled_report(counts).to_json() == \
            pooled_report(dict(reversed(list(counts.items())))).to_json()


class TestKfold:
    def test_ten_items_five_folds(self):
        folds = kfold_split(list(range(10)), k=5, seed=0)
        assert len(folds) == 5
        assert all(len(f) == 2 for f in folds)
        assert sorted(x for f in folds for x in f) == list(range(10))

    def test_same_seed_deterministic(self):
        a = kfold_split(list("abcdefgh"), k=3, seed=42)
        b = kfold_split(list("abcdefgh"), k=3, seed=42)
        assert a == b

    def test_different_seed_differs(self):
        items = list(range(30))
        assert kfold_split(items, k=5, seed=1) != kfold_split(items, k=5, seed=2)

    def test_too_few_items(self):
        with pytest.raises(DataError):
            kfold_split([1, 2, 3], k=5)

    @given(n=st.integers(5, 40), k=st.integers(2, 5), seed=st.integers(0, 100))
    @settings(max_examples=50, deadline=None)
    def test_partition_property(self, n, k, seed):
        if n < k:
            return
        folds = kfold_split(list(range(n)), k=k, seed=seed)
        flat = sorted(x for f in folds for x in f)
        assert flat == list(range(n))
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1
