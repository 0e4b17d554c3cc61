import numpy as np
import pytest

from gazecnn.bench import MIN_FRAMES, STAGES, LatencyReport, bench_pipeline, time_frame
from gazecnn.cnn import ArchConfig, init_params
from gazecnn.errors import MalformedInputError


@pytest.fixture(scope="module")
def net():
    return init_params(ArchConfig(), 0)


def test_report_order_statistics_and_rows(cascades, heldout_scenes, net):
    frames = [f for f, _ in heldout_scenes[:12]]
    rep = bench_pipeline(frames, *cascades, net, repetitions=3, warmup=4)
    assert rep.n_frames == 12 * 3 - 4
    assert rep.frame_size == (320, 240)
    for s in STAGES + ("end_to_end",):
        st = rep.stage(s)
        assert st["p50"] <= st["p95"] <= st["max"]
    assert rep.sums_consistent
    d = rep.to_dict()
    assert list(d["stages"]) == list(STAGES) and sum(d["outcomes"].values()) == 32
    assert "end_to_end" in rep.table()


def test_failed_frames_stop_early(cascades, net):
    blank = np.zeros((240, 320), np.uint8)
    row, reached, outcome, label = time_frame(blank, *cascades, net)
    assert outcome == "face_not_found" and reached == 1 and label is None
    assert row[1:4] == [0.0, 0.0, 0.0] and row[-1] >= row[0]
    rep = bench_pipeline([blank] * MIN_FRAMES, *cascades, net, warmup=0)
    assert rep.outcomes == {"face_not_found": MIN_FRAMES}
    assert rep.stage("cnn_forward")["p50"] is None
    assert rep.stage("face_detect")["p50"] is not None


def test_bench_preconditions(cascades, net):
    blank = np.zeros((240, 320), np.uint8)
    with pytest.raises(MalformedInputError):
        bench_pipeline([blank] * 10, *cascades, net, repetitions=2)
    with pytest.raises(MalformedInputError):
        bench_pipeline([blank] * 29 + [np.zeros((10, 10), np.uint8)], *cascades, net)
    with pytest.raises(ValueError):
        bench_pipeline([blank] * 40, *cascades, net, repetitions=0)


def test_sum_gap():
    rows = np.array([[1.0, 2.0, 3.0, 4.0, 10.0], [1.0, 0.0, 0.0, 0.0, 1.2]])
    rep = LatencyReport(rows, np.array([4, 1]), (2, 2))
    assert rep.sum_gap == pytest.approx(0.2 / 11.2)
    assert rep.sums_consistent
