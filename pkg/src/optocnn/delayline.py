"""Delay-line repatching between layers.

All times are integers in units of the feed period ``1/f`` ("slots"). A
producing layer emits pixel ``(i, j)`` of its output image at slot
``i * dT + j * dt``; the next layer's splitter tree copies every sample into
``k*k`` taps, tap ``(r, c)`` delayed by ``(k-1-r) * dT + (k-1-c) * dt``, so all
taps of a patch line up when its bottom-right pixel arrives.
"""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnn import CONV, LayerGeometry, NetworkSpec, extract_patches, stream_to_image
from .errors import GeometryMismatch

CSV_HEADER = ["layer", "dim", "kernel", "stride", "dt_over_1f", "dT_over_1f", "max_len_over_1f"]


@dataclass(frozen=True)
class DelayParams:
    dt: int  # column delay, slots
    dT: int  # row delay, slots
    f: float = 1.0  # feed frequency, Hz

    def __post_init__(self):
        if int(self.dt) != self.dt or int(self.dT) != self.dT:
            raise GeometryMismatch(f"delays must be whole slots, got dt={self.dt}, dT={self.dT}")
        if not 1 <= self.dt <= self.dT:
            raise GeometryMismatch(f"need 1 <= dt <= dT, got dt={self.dt}, dT={self.dT}")
        if not self.f > 0:
            raise GeometryMismatch(f"feed frequency must be positive, got {self.f}")

    @property
    def dt_seconds(self) -> float:
        return self.dt / self.f

    @property
    def dT_seconds(self) -> float:
        return self.dT / self.f


def initial_delays(w: int, k0: int, s0: int, p: int = 0, f: float = 1.0) -> DelayParams:
    """Delays after the first layer, which emits one patch result per slot."""
    return DelayParams(1, LayerGeometry(w, k0, s0, p).out_width, f)


def propagate_delays(prev: DelayParams, s_prev: int) -> DelayParams:
    if s_prev < 1:
        raise GeometryMismatch(f"stride must be >= 1, got {s_prev}")
    return DelayParams(prev.dt * s_prev, prev.dT * s_prev, prev.f)


def max_delay_length(k: int, params: DelayParams) -> int:
    if k < 1:
        raise GeometryMismatch(f"kernel width must be >= 1, got {k}")
    return (k - 1) * (params.dT + params.dt)


@dataclass(frozen=True, eq=False)
class DelayBank:
    k: int
    assignments: np.ndarray  # (k, k) slots

    @property
    def max_length(self) -> int:
        return int(self.assignments.max())


def delay_bank(k: int, params: DelayParams) -> DelayBank:
    r, c = np.indices((k, k))
    return DelayBank(k, (k - 1 - r) * params.dT + (k - 1 - c) * params.dt)


# network planning


@dataclass(frozen=True)
class DelayRow:
    layer: str
    dim: int
    kernel: int
    stride: int | None  # None: last boundary, nothing downstream
    params: DelayParams

    @property
    def max_length(self) -> int:
        return max_delay_length(self.kernel, self.params)


@dataclass(frozen=True)
class DelayPlan:
    rows: tuple[DelayRow, ...]

    @property
    def max_length(self) -> int:
        return max((r.max_length for r in self.rows), default=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(CSV_HEADER)
        for r in self.rows:
            out.writerow([
                r.layer, r.dim, r.kernel, "NA" if r.stride is None else r.stride,
                r.params.dt, r.params.dT, r.max_length,
            ])
        return buf.getvalue()


def plan_delays(boundaries: Sequence[tuple[int, int, int | None]], initial: DelayParams, names=None) -> DelayPlan:
    """Delay table for consecutive ``(dim, kernel, stride)`` layer boundaries.

    The first boundary uses ``initial``; each later one scales the previous
    delays by the previous boundary's stride.
    """
    rows = []
    params = initial
    for n, (dim, kernel, stride) in enumerate(boundaries):
        if n:
            prev_stride = rows[-1].stride
            if prev_stride is None:
                raise GeometryMismatch("only the last boundary may omit its stride")
            params = propagate_delays(params, prev_stride)
        if kernel < 1 or kernel > dim:
            raise GeometryMismatch(f"kernel {kernel} does not fit a {dim}-wide image")
        name = names[n] if names else f"layer{n + 1}"
        rows.append(DelayRow(name, dim, kernel, stride, params))
    return DelayPlan(tuple(rows))


def plan_network_delays(net: NetworkSpec, f: float = 1.0) -> DelayPlan:
    """Delay lines at every boundary where a conv output is repatched.

    A fully connected layer directly after a convolution is a convolution whose
    kernel covers the whole image, so it gets a boundary with no stride.
    """
    g0 = net.layers[0].geometry
    initial = initial_delays(g0.w, g0.k, g0.s, g0.p, f)
    boundaries, names = [], []
    for i, (prev, layer) in enumerate(zip(net.layers, net.layers[1:]), start=2):
        if prev.kind != CONV:
            break
        if layer.kind == CONV:
            g = layer.geometry
            boundaries.append((g.w, g.k, g.s))
        else:
            w = prev.geometry.out_width
            boundaries.append((w, w, None))
        names.append(f"layer{i}")
    return plan_delays(boundaries, initial, names)


ALEXNET_DELAY_INPUT = (227, 11, 4, 0)  # image width, first kernel, first stride, padding -> 55x55 output
ALEXNET_DELAY_BOUNDARIES = ((55, 5, 2), (27, 3, 2), (13, 3, 2), (13, 3, 1), (13, 13, None))
ALEXNET_DELAY_NAMES = ("1st-ConvLayer", "2nd-ConvLayer", "3rd-ConvLayer", "4th-ConvLayer", "5th-ConvLayer")


def alexnet_delay_plan(f: float = 1.0) -> DelayPlan:
    """The AlexNet-style delay table, reproduced row by row as published.

    Its dimensions do not chain as a consistent network (27 -> 13 -> 13 under
    stride 2), so it is planned from explicit boundaries rather than a NetworkSpec.
    """
    return plan_delays(ALEXNET_DELAY_BOUNDARIES, initial_delays(*ALEXNET_DELAY_INPUT, f=f), ALEXNET_DELAY_NAMES)


# tap-level simulation


@dataclass(frozen=True)
class SamplingSchedule:
    valid_times: tuple[int, ...]
    invalid_times: tuple[int, ...]
    total_timesteps: int

    def __post_init__(self):
        assert len(self.valid_times) + len(self.invalid_times) == self.total_timesteps

    @property
    def invalid_count(self) -> int:
        return len(self.invalid_times)


def emission_times(w: int, params: DelayParams) -> np.ndarray:
    i, j = np.divmod(np.arange(w * w), w)
    return i * params.dT + j * params.dt


def simulate_repatching(outputs, g_next: LayerGeometry, params: DelayParams) -> tuple[SamplingSchedule, np.ndarray]:
    """Run the splitter/delay bank over one input period.

    ``outputs`` is the previous layer's ``(w*w, d)`` pixel stream in row-major
    order. Every sample is pushed into one FIFO per tap; at each slot the
    ``k*k`` tap heads are gathered and the slot is valid iff they hold exactly
    one stride-aligned patch. Returns the schedule and the ``(n_valid, k*k*d)``
    patches gathered at valid slots.
    """
    img = stream_to_image(outputs)
    w, d = img.shape[0], img.shape[-1]
    if img.ndim != 3:
        raise GeometryMismatch("simulate_repatching takes a single (T, d) stream")
    if (g_next.w, g_next.c) != (w, d):
        raise GeometryMismatch(f"stream is {w}x{w}x{d}, next layer expects {g_next.w}x{g_next.w}x{g_next.c}")
    if g_next.p:
        raise GeometryMismatch("padding is not representable in the delay-line simulator")
    if params.dT < (w - 1) * params.dt + 1:
        raise GeometryMismatch(f"dT={params.dT} lets rows of a {w}-wide image overlap at dt={params.dt}")

    k, s = g_next.k, g_next.s
    pixels = img.reshape(w * w, d)
    period = w * params.dT
    source = np.full(period, -1, dtype=np.int64)  # pixel index on the line at each slot, -1 = dark
    source[emission_times(w, params)] = np.arange(w * w)
    bank = delay_bank(k, params)
    taps = [deque([-1] * int(delay), maxlen=int(delay) + 1) for delay in bank.assignments.ravel()]

    offsets = (np.arange(k)[:, None] * w + np.arange(k)[None, :]).ravel()
    valid, invalid, patches = [], [], []
    for t in range(period):
        heads = np.empty(k * k, dtype=np.int64)
        for n, fifo in enumerate(taps):
            fifo.append(source[t])
            heads[n] = fifo.popleft()
        base = heads[0]
        i0, j0 = divmod(int(base), w)
        if (
            base >= 0
            and np.array_equal(heads, base + offsets)
            and j0 + k <= w
            and i0 % s == 0
            and j0 % s == 0
        ):
            valid.append(t)
            patches.append(pixels[heads].ravel())
        else:
            invalid.append(t)
    gathered = np.array(patches).reshape(len(valid), k * k * d)
    return SamplingSchedule(tuple(valid), tuple(invalid), period), gathered


def repatch_trace(outputs, g_next: LayerGeometry, params: DelayParams) -> str:
    schedule, patches = simulate_repatching(outputs, g_next, params)
    return json.dumps({
        "valid_times": list(schedule.valid_times),
        "invalid_times": list(schedule.invalid_times),
        "patches": patches.tolist(),
    }, indent=1) + "\n"


def reference_patches(outputs, g_next: LayerGeometry) -> np.ndarray:
    """What the delay bank should produce: im2col of the reshaped stream."""
    return extract_patches(stream_to_image(outputs), g_next)
