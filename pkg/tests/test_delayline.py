import json

import numpy as np
import pytest

from optocnn import cnn, delayline
from optocnn.delayline import DelayParams, simulate_repatching
from optocnn.errors import GeometryMismatch


def test_initial_delays():
    p = delayline.initial_delays(227, 11, 4)
    assert (p.dt, p.dT) == (1, 55)
    assert delayline.initial_delays(3, 1, 1) == DelayParams(1, 3)


def test_propagate_and_max_length():
    p = delayline.propagate_delays(DelayParams(1, 55), 2)
    assert (p.dt, p.dT) == (2, 110)
    assert delayline.max_delay_length(5, DelayParams(1, 55)) == 224
    assert delayline.max_delay_length(1, DelayParams(3, 9)) == 0


def test_seconds():
    p = DelayParams(2, 110, f=1e9)
    assert p.dt_seconds == pytest.approx(2e-9)
    assert p.dT_seconds == pytest.approx(1.1e-7)


@pytest.mark.parametrize("bad", [(0, 3), (4, 3), (1.5, 3)])
def test_bad_params(bad):
    with pytest.raises(GeometryMismatch):
        DelayParams(*bad)


def test_two_by_two_delay_bank():
    bank = delayline.delay_bank(2, DelayParams(1, 3))
    # taps (r, c): later taps wait less; the bottom-right tap is undelayed
    assert bank.assignments.tolist() == [[4, 3], [1, 0]]
    assert bank.max_length == 4


def test_alexnet_delay_table():
    plan = delayline.alexnet_delay_plan()
    assert [r.max_length for r in plan.rows] == [224, 224, 448, 896, 5376]
    assert [r.params.dt for r in plan.rows] == [1, 2, 4, 8, 8]
    assert [r.params.dT for r in plan.rows] == [55, 110, 220, 440, 440]
    assert plan.max_length == 5376
    lines = plan.to_csv().splitlines()
    assert lines[0] == ",".join(delayline.CSV_HEADER)
    assert lines[-1] == "5th-ConvLayer,13,13,NA,8,440,5376"


def test_toy_network_plan():
    csv = delayline.plan_network_delays(cnn.toy_mnist_network()).to_csv()
    assert csv.splitlines()[1:] == ["layer2,14,4,2,1,14,45", "layer3,7,7,NA,2,28,180"]


def test_plan_rejects_early_missing_stride():
    with pytest.raises(GeometryMismatch):
        delayline.plan_delays([(13, 3, None), (11, 3, 1)], DelayParams(1, 13))


def test_three_by_three_simulation():
    schedule, patches = simulate_repatching(np.arange(9.0)[:, None], cnn.LayerGeometry(3, 2), DelayParams(1, 3))
    assert schedule.valid_times == (4, 5, 7, 8)
    assert schedule.invalid_times == (0, 1, 2, 3, 6)
    assert schedule.invalid_count == 5
    assert patches.tolist() == [[0, 1, 3, 4], [1, 2, 4, 5], [3, 4, 6, 7], [4, 5, 7, 8]]


def test_stride_two_valid_times():
    w = 7
    schedule, patches = simulate_repatching(np.arange(49.0)[:, None], cnn.LayerGeometry(w, 3, 2), DelayParams(1, w))
    expected = [2 * w + 2 + 2 * w * i + 2 * j for i in range(3) for j in range(3)]
    assert list(schedule.valid_times) == expected
    assert schedule.total_timesteps == 49


def test_slack_in_row_delay():
    # dT larger than the row length leaves dark slots, which are never valid
    outputs = np.random.default_rng(0).normal(size=(25, 2))
    g = cnn.LayerGeometry(5, 2, 1, c=2)
    schedule, patches = simulate_repatching(outputs, g, DelayParams(2, 12))
    assert schedule.total_timesteps == 60
    assert np.array_equal(patches, delayline.reference_patches(outputs, g))


def test_unit_kernel_all_valid():
    schedule, _ = simulate_repatching(np.zeros((49, 1)), cnn.LayerGeometry(7, 1), DelayParams(1, 7))
    assert schedule.invalid_count == 0


@pytest.mark.parametrize("seed", range(10))
def test_matches_im2col(seed):
    rng = np.random.default_rng(seed)
    k, s, d, out = (int(v) for v in rng.integers(1, [5, 4, 5, 4]))
    w = (out - 1) * s + k
    outputs = rng.normal(size=(w * w, d))
    g = cnn.LayerGeometry(w, k, s, c=d)
    _, patches = simulate_repatching(outputs, g, DelayParams(1, w))
    assert np.max(np.abs(patches - cnn.repatch(outputs, g))) < 1e-12


def test_simulation_rejects():
    with pytest.raises(GeometryMismatch):
        simulate_repatching(np.zeros((9, 1)), cnn.LayerGeometry(3, 2, p=1, s=1), DelayParams(1, 3))
    with pytest.raises(GeometryMismatch):
        simulate_repatching(np.zeros((9, 1)), cnn.LayerGeometry(3, 2), DelayParams(1, 2))
    with pytest.raises(GeometryMismatch):
        simulate_repatching(np.zeros((16, 1)), cnn.LayerGeometry(3, 2), DelayParams(1, 3))


def test_trace_json():
    doc = json.loads(delayline.repatch_trace(np.arange(9.0)[:, None], cnn.LayerGeometry(3, 2), DelayParams(1, 3)))
    assert doc["valid_times"] == [4, 5, 7, 8]
    assert len(doc["patches"]) == 4


def test_initial_delays_for_unit_output():
    assert delayline.initial_delays(5, 5, 1) == DelayParams(1, 1)


def test_stride_one_propagation_is_identity():
    p = DelayParams(3, 40)
    for _ in range(10):
        p = delayline.propagate_delays(p, 1)
    assert p == DelayParams(3, 40)


@pytest.mark.parametrize("seed", range(5))
def test_network_plan_matches_recursion(seed):
    rng = np.random.default_rng(seed)
    layers, w, c = [], 30, 1
    for _ in range(3):
        k = int(rng.integers(1, 4))
        s = int(rng.choice([s for s in (1, 2, 3) if (w - k) % s == 0]))
        layers.append(cnn.Layer.conv(w=w, k=k, s=s, c=c, d=2))
        w, c = (w - k) // s + 1, 2
    plan = delayline.plan_network_delays(cnn.NetworkSpec(tuple(layers)))
    # hand recursion: dt = 1, dT = first output width, both scaled by each upstream stride
    dt, dT = 1, layers[0].geometry.out_width
    for n, row in enumerate(plan.rows):
        if n:
            dt, dT = dt * layers[n].geometry.s, dT * layers[n].geometry.s
        k = layers[n + 1].geometry.k
        assert (row.params.dt, row.params.dT, row.max_length) == (dt, dT, (k - 1) * (dT + dt))


@pytest.mark.parametrize("k", [1, 2, 5])
def test_bank_max_is_closed_form(k):
    p = DelayParams(3, 17)
    assert delayline.delay_bank(k, p).max_length == delayline.max_delay_length(k, p)


@pytest.mark.parametrize("w, k, s", [(7, 3, 2), (9, 3, 3), (6, 2, 2), (5, 5, 1), (8, 4, 1)])
def test_valid_count_formula(w, k, s):
    schedule, _ = simulate_repatching(np.zeros((w * w, 1)) + np.arange(w * w)[:, None], cnn.LayerGeometry(w, k, s), DelayParams(1, w))
    assert len(schedule.valid_times) == ((w - k) // s + 1) ** 2
    assert len(schedule.valid_times) + schedule.invalid_count == schedule.total_timesteps
