"""Per-inference energy and time for all-optical, electronic and hybrid CNN hardware."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class ArchRow:
    name: str
    kernel_size: int  # k * k * c
    num_patches: int
    num_kernels: int  # kernels, or nonlinearity units for the optical table

    def __post_init__(self):
        for v in (self.kernel_size, self.num_patches, self.num_kernels):
            if int(v) != v or v < 1:
                raise ValueError(f"{self.name}: sizes must be positive integers")


ArchTable = Sequence[ArchRow]

_NAMES = ("1st Conv", "2nd Conv", "3rd Conv", "4th Conv", "5th Conv", "1st FC", "2nd FC", "3rd FC")

ALEXNET = tuple(
    ArchRow(n, ks, p, d)
    for n, ks, p, d in zip(
        _NAMES,
        (11 * 11 * 3, 5 * 5 * 96, 3 * 3 * 256, 3 * 3 * 384, 3 * 3 * 384, 13 * 13 * 256, 4096, 4096),
        (55 * 55, 27 * 27, 13 * 13, 13 * 13, 13 * 13, 1, 1, 1),
        (96, 256, 384, 384, 256, 4096, 4096, 1000),
    )
)

# The optical power table charges every conv row with the first layer's 55x55 patches.
ALEXNET_OPTICAL = tuple(
    ArchRow(r.name, r.kernel_size, 55 * 55 if r.num_patches > 1 else 1, r.num_kernels) for r in ALEXNET
)

PRESETS = {"alexnet": ALEXNET, "alexnet-optical": ALEXNET_OPTICAL}


def round_sig(x: float, digits: int) -> float:
    if x == 0:
        return 0.0
    return round(x, digits - 1 - math.floor(math.log10(abs(x))))


@dataclass
class EnergyReport:
    model: str
    value_column: str
    rows: list[dict]
    derived: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def total(self):
        return sum(r[self.value_column] for r in self.rows)

    def to_csv(self) -> str:
        cols = list(self.rows[0])
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(cols)
        for r in self.rows:
            out.writerow([_fmt(r[c]) for c in cols])
        out.writerow(["TOTAL"] + [_fmt(self.total) if c == self.value_column else "" for c in cols[1:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "rows": self.rows,
            "total": {self.value_column: self.total},
            "derived": self.derived,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


# all-optical


@dataclass(frozen=True)
class OpticalEnergyParams:
    p0: float = 0.05e-3  # W per waveguide, nonlinearity trigger power
    f: float = 3e9  # Hz
    amplifier_wall_plug: float = 0.10
    pulses_per_waveguide: int = 55 * 55
    # round the per-waveguide energy before use, as the printed table does (5e-10 J)
    waveguide_energy_sig_digits: int | None = None

    def __post_init__(self):
        if not self.p0 >= 0 or not self.f > 0 or not 0 < self.amplifier_wall_plug <= 1:
            raise ValueError(f"invalid optical parameters {self}")

    @classmethod
    def published(cls) -> "OpticalEnergyParams":
        return cls(waveguide_energy_sig_digits=1)

    @property
    def waveguide_energy(self) -> float:
        e = self.pulses_per_waveguide / self.amplifier_wall_plug * self.p0 / self.f
        if self.waveguide_energy_sig_digits is not None:
            e = round_sig(e, self.waveguide_energy_sig_digits)
        return e


CLOSED_FORM_COEFFICIENT = 1.26e11  # published constant in P_inf = C * dt * P0


def optical_energy(arch: ArchTable, p: OpticalEnergyParams) -> EnergyReport:
    e = p.waveguide_energy
    rows = [
        {"layer": r.name, "units": r.num_kernels, "patches": r.num_patches, "energy_j": r.num_kernels * r.num_patches * e}
        for r in arch
    ]
    units_x_patches = sum(r.num_kernels * r.num_patches for r in arch)
    coefficient = p.pulses_per_waveguide / p.amplifier_wall_plug * units_x_patches
    dt = 1.0 / p.f
    report = EnergyReport("optical", "energy_j", rows)
    report.derived = {
        "waveguide_energy_j": e,
        "waveguide_energy_unrounded_j": p.pulses_per_waveguide / p.amplifier_wall_plug * p.p0 / p.f,
        "closed_form_coefficient": coefficient,
        "closed_form_energy_j": coefficient * dt * p.p0,
        "published_closed_form_energy_j": CLOSED_FORM_COEFFICIENT * dt * p.p0,
    }
    return report


# electronic


def electronic_energy(arch: ArchTable, rate_flops_per_s: float = 112e12, power_w: float = 250.0) -> EnergyReport:
    rows = [
        {
            "layer": r.name,
            "kernel_size": r.kernel_size,
            "patches": r.num_patches,
            "kernels": r.num_kernels,
            "flops": r.kernel_size * r.num_patches * r.num_kernels * 2,
        }
        for r in arch
    ]
    report = EnergyReport("electronic", "flops", rows)
    seconds = report.total / rate_flops_per_s
    report.derived = {"time_per_image_s": seconds, "energy_j": seconds * power_w}
    return report


PUBLISHED_OPTICAL_TIME_S = 1e6  # printed "~10^6 s"; the arithmetic gives ~1e-6 s
PUBLISHED_SPEEDUP = 30.0


def optical_time(first_layer_patches: int, f: float, electronic_time_s: float | None = None) -> dict:
    """Optical image time is the first layer's patch count at the feed rate."""
    if not f > 0:
        raise ValueError("f must be positive")
    t = first_layer_patches / f
    out = {"optical_time_s": t}
    if electronic_time_s is not None:
        out["speedup"] = electronic_time_s / t
        out["published_speedup"] = PUBLISHED_SPEEDUP
        out["published_optical_time_s"] = PUBLISHED_OPTICAL_TIME_S
        out["discrepancy"] = (
            f"computed {t:.4g} s and {out['speedup']:.3g}x; published '~10^6 s' (exponent sign) "
            f"and '{PUBLISHED_SPEEDUP:g} times faster' (rounded)"
        )
    return out


# optical-electronic hybrid


def analog_memory_energy(capacitance_f: float = 100e-15, voltage_v: float = 1.0, num_capacitors: int = 1000) -> float:
    """C V^2 per capacitor times the capacitor count, J per sample."""
    return capacitance_f * voltage_v**2 * num_capacitors


@dataclass(frozen=True)
class HybridParams:
    tia_pj: float = 20.0
    modulator_driver_pj: float = 100.0
    analog_memory_pj: float = field(default_factory=lambda: analog_memory_energy() * 1e12)
    laser_power_w: float = 2.0
    modulation_hz: float = 1e9
    monolithic_pj_per_sample: float = 5e-3  # 5 fJ

    @property
    def per_sample_pj(self) -> float:
        return self.tia_pj + self.modulator_driver_pj + self.analog_memory_pj


def hybrid_energy(arch: ArchTable, p: HybridParams | None = None) -> EnergyReport:
    """Analog ops are kernel size x patches x 2; the kernel count does not enter."""
    p = p or HybridParams()
    rows = [
        {"layer": r.name, "kernel_size": r.kernel_size, "patches": r.num_patches,
         "analog_ops": r.kernel_size * r.num_patches * 2}
        for r in arch
    ]
    report = EnergyReport("hybrid", "analog_ops", rows)
    total_ops = report.total
    total_patches = sum(r.num_patches for r in arch)
    report.derived = {
        "per_sample_pj": p.per_sample_pj,
        "analog_energy_j": total_ops * p.per_sample_pj * 1e-12,
        "analog_memory_pj_per_sample": p.analog_memory_pj,
        "total_patches": total_patches,
        "laser_energy_j": p.laser_power_w * total_patches / p.modulation_hz,
        "monolithic_energy_j": total_ops * p.monolithic_pj_per_sample * 1e-12,
    }
    return report


def params_from_dict(cls, doc: dict | None):
    """Build a parameter dataclass from a config mapping, rejecting unknown keys."""
    doc = dict(doc or {})
    known = set(asdict(cls()))
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**doc)
