"""Classification agreement of phase-perturbed networks against the unperturbed reference."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnn import NetworkSpec, check_weights, infer_batch
from .photonic import KernelFactors, factor_kernel, realize_kernel
from .reck import PhaseNoiseModel

log = logging.getLogger(__name__)

CSV_HEADER = "sigma,trial,agreement"


def default_sigmas() -> list[float]:
    return list(np.logspace(-5, np.log10(0.3), 20))


@dataclass(frozen=True)
class AgreementRow:
    sigma: float
    trial: int
    agreement: float


def agreement(reference_scores: np.ndarray, scores: np.ndarray) -> float:
    """Fraction of images whose decision matches the reference.

    Decisions are argmax with ties to the lowest index; an image where either
    network ties only agrees if both tie over the same set of classes.
    """
    ref_top = reference_scores == reference_scores.max(axis=1, keepdims=True)
    top = scores == scores.max(axis=1, keepdims=True)
    tied = (ref_top.sum(axis=1) > 1) | (top.sum(axis=1) > 1)
    same = np.where(tied, np.all(ref_top == top, axis=1), ref_top.argmax(axis=1) == top.argmax(axis=1))
    return float(np.mean(same))


def trial_seeds(seed: int, trial: int, n_layers: int) -> list[int]:
    # independent of sigma: every sigma of one trial sees the same standard-normal draws
    children = np.random.SeedSequence([seed, trial]).spawn(n_layers)
    return [int(c.generate_state(1)[0]) for c in children]


def perturbed_weights(factors: Sequence[KernelFactors], sigma: float, seeds: Sequence[int]) -> list[np.ndarray]:
    return [realize_kernel(f, PhaseNoiseModel(sigma, s)) for f, s in zip(factors, seeds)]


def perturbation_experiment(
    net: NetworkSpec,
    weights: Sequence,
    sigmas: Sequence[float],
    trials: int,
    images,
    seed: int,
    factors: Sequence[KernelFactors] | None = None,
    workers: int = 1,
) -> list[AgreementRow]:
    """Agreement for every (sigma, trial), ordered by sigma then trial."""
    weights = check_weights(net, weights)
    if trials < 1:
        raise ValueError("need at least one trial")
    if factors is None:
        factors = [factor_kernel(m) for m in weights]
    reference = infer_batch(net, weights, images)
    jobs = [(float(s), t) for s in sigmas for t in range(trials)]

    def run(job):
        sigma, trial = job
        realized = perturbed_weights(factors, sigma, trial_seeds(seed, trial, len(factors)))
        a = agreement(reference, infer_batch(net, realized, images))
        log.debug("sigma=%.3g trial=%d agreement=%.4f", sigma, trial, a)
        return AgreementRow(sigma, trial, a)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


def median_by_sigma(rows: Sequence[AgreementRow]) -> dict[float, float]:
    by = {}
    for r in rows:
        by.setdefault(r.sigma, []).append(r.agreement)
    return {s: float(np.median(v)) for s, v in sorted(by.items())}


def rows_to_csv(rows: Sequence[AgreementRow]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(CSV_HEADER.split(","))
    for r in rows:
        out.writerow([f"{r.sigma:.10g}", r.trial, f"{r.agreement:.10g}"])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[AgreementRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER.split(","):
        raise ValueError(f"expected header {CSV_HEADER!r}, got {reader.fieldnames}")
    return [AgreementRow(float(r["sigma"]), int(r["trial"]), float(r["agreement"])) for r in reader]
