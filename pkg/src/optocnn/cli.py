"""Command-line driver.

Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

``--config FILE`` supplies a JSON object whose keys are option names
(``--sigma`` -> ``"sigma"``); options given on the command line override it.
Relative output paths are resolved against ``$OPTOCNN_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import cnn, delayline, energy, experiment, idx, photonic, reck
from .errors import OptoCNNError

log = logging.getLogger("optocnn")

OUTPUT_DIR_ENV = "OPTOCNN_OUTPUT_DIR"


class UsageError(OptoCNNError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def reference_weights_text() -> str:
    return resources.files("optocnn").joinpath("data/reference_weights.json").read_text()


def resolve_output(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    return Path(base) / p if base and not p.is_absolute() else p


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(args, text: str) -> None:
    if args.output:
        out = resolve_output(args.output)
        write_atomic(out, text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    doc = json.loads(path.read_text())
    if isinstance(doc, list):
        return np.asarray(doc, dtype=np.float64)
    if "matrix" in doc:
        return np.asarray(doc["matrix"], dtype=np.float64)
    return np.asarray(doc["entries"], dtype=np.float64).reshape(doc["rows"], doc["cols"])


def matrix_json(m: np.ndarray) -> str:
    return json.dumps({"rows": m.shape[0], "cols": m.shape[1], "entries": [float(x) for x in m.ravel()]}) + "\n"


def load_dataset(args, split: str):
    if args.images:
        images = idx.load_images(args.images)
        labels = idx.load_labels(args.labels) if args.labels else None
    elif args.data_dir:
        found = idx.find_mnist(args.data_dir, split)
        if found is None:
            raise FileNotFoundError(f"no MNIST {split} files in {args.data_dir}")
        images, labels = idx.load_images(found[0]), idx.load_labels(found[1])
    else:
        raise UsageError("give --images (and --labels) or --data-dir")
    if args.limit is not None:
        images = images[: args.limit]
        labels = None if labels is None else labels[: args.limit]
    return images, labels


def load_weights(args):
    text = Path(args.weights).read_text() if args.weights else reference_weights_text()
    return cnn.weights_from_json(text)


# commands


def cmd_decompose(args):
    m = load_matrix(args.matrix)
    if args.kernel:
        emit(args, photonic.factor_kernel(m).to_json())
    else:
        emit(args, reck.extract_phases(m).to_json())


def cmd_realize(args):
    require(args, "sigma", "seed")
    doc = json.loads(Path(args.schedule).read_text())
    noise = reck.PhaseNoiseModel(args.sigma, args.seed)
    if "u_schedule" in doc:
        m = photonic.realize_kernel(photonic.KernelFactors.from_dict(doc), noise)
    else:
        m = reck.reconstruct_orthogonal(reck.perturb_phases(reck.PhaseSchedule.from_dict(doc), noise))
    emit(args, matrix_json(m))


def cmd_train(args):
    from .train import TrainConfig, train_reference

    require(args, "seed")
    images, labels = load_dataset(args, "train")
    if labels is None:
        raise UsageError("training needs --labels")
    cfg = TrainConfig(seed=args.seed)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    result = train_reference(images, labels, cfg)
    log.info("train accuracy %.4f", result.train_accuracy)
    emit(args, cnn.weights_to_json(cnn.toy_mnist_network(), result.weights))


def cmd_infer(args):
    net, weights = load_weights(args)
    images, labels = load_dataset(args, "test")
    pred = cnn.predict(cnn.infer_batch(net, weights, images))
    doc = {"count": int(len(pred)), "predictions": pred.tolist()}
    if labels is not None:
        doc["accuracy"] = float(np.mean(pred == labels))
    emit(args, json.dumps(doc) + "\n")


def cmd_sweep(args):
    require(args, "seed", "trials")
    net, weights = load_weights(args)
    images, _ = load_dataset(args, "test")
    sigmas = args.sigma if args.sigma is not None else experiment.default_sigmas()
    rows = experiment.perturbation_experiment(
        net, weights, sigmas, args.trials, images, args.seed, workers=args.workers or 1
    )
    emit(args, experiment.rows_to_csv(rows))


def cmd_delays(args):
    f = args.f if args.f is not None else 1.0
    if args.preset in ("table1", "alexnet"):
        plan = delayline.alexnet_delay_plan(f)
    elif args.preset == "toy":
        plan = delayline.plan_network_delays(cnn.toy_mnist_network(), f)
    elif args.weights:
        plan = delayline.plan_network_delays(load_weights(args)[0], f)
    else:
        raise UsageError("give --preset or --weights")
    emit(args, plan.to_csv())


def cmd_repatch_sim(args):
    if args.preset == "3x3":
        w, k, s, d = 3, 2, 1, 1
        outputs = np.arange(9, dtype=np.float64)[:, None]  # values are the emission timesteps
    else:
        require(args, "width", "kernel", "seed")
        w, k, s, d = args.width, args.kernel, args.stride or 1, args.channels or 1
        outputs = np.random.default_rng(args.seed).normal(size=(w * w, d))
    dt = args.dt or 1
    params = delayline.DelayParams(dt, args.dT or w * dt)
    emit(args, delayline.repatch_trace(outputs, cnn.LayerGeometry(w, k, s, 0, d), params))


def cmd_energy(args):
    cfg = args.params or {}
    args.preset = args.preset or "alexnet"
    # values from --config bypass argparse's choices
    if args.preset not in energy.PRESETS or args.format not in (None, "csv", "json"):
        raise UsageError(f"unknown preset {args.preset!r} or format {args.format!r}")
    if args.model == "optical":
        arch = energy.ALEXNET_OPTICAL if args.preset == "alexnet" else energy.PRESETS[args.preset]
        base = energy.OpticalEnergyParams.published()
        p = energy.params_from_dict(energy.OpticalEnergyParams, {**asdict(base), **cfg})
        report = energy.optical_energy(arch, p)
    elif args.model == "electronic":
        arch = energy.PRESETS[args.preset]
        report = energy.electronic_energy(arch, **cfg)
        first = arch[0].num_patches
        f = energy.OpticalEnergyParams().f
        report.derived.update(energy.optical_time(first, f, report.derived["time_per_image_s"]))
    else:
        arch = energy.PRESETS[args.preset]
        report = energy.hybrid_energy(arch, energy.params_from_dict(energy.HybridParams, cfg))
    emit(args, report.to_json() if args.format == "json" else report.to_csv())


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="optocnn", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file of option defaults")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out(p):
        p.add_argument("-o", "--output", help="output file (default: stdout)")

    def data(p):
        p.add_argument("--data-dir", help="directory with MNIST IDX files (.gz accepted)")
        p.add_argument("--images")
        p.add_argument("--labels")
        p.add_argument("--limit", type=int, help="use only the first N images")

    p = sub.add_parser("decompose", help="orthogonal matrix -> phase schedule JSON")
    p.add_argument("matrix", help=".npy or JSON matrix")
    p.add_argument("--kernel", action="store_true", help="factor a rectangular kernel matrix (U, Sigma, V)")
    out(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("realize", help="schedule or kernel factors + phase noise -> matrix JSON")
    p.add_argument("schedule")
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    out(p)
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("train", help="train the toy MNIST network")
    data(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    out(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="classify images")
    data(p)
    p.add_argument("--weights", help="weight file (default: bundled reference network)")
    out(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="phase-noise agreement sweep -> CSV")
    data(p)
    p.add_argument("--weights", help="weight file (default: bundled reference network)")
    p.add_argument("--sigma", type=float, action="append", help="repeatable; default 20 points in [1e-5, 0.3]")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    out(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("delays", help="delay-line table -> CSV")
    p.add_argument("--preset", choices=["table1", "alexnet", "toy"])
    p.add_argument("--weights", help="plan for the network stored in a weight file")
    p.add_argument("--f", type=float, help="feed frequency, Hz")
    out(p)
    p.set_defaults(func=cmd_delays)

    p = sub.add_parser("repatch-sim", help="delay-bank simulation trace -> JSON")
    p.add_argument("--preset", choices=["3x3"])
    p.add_argument("--width", type=int)
    p.add_argument("--kernel", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--dt", type=int, help="column delay in slots (default 1)")
    p.add_argument("--dT", type=int, help="row delay in slots (default width * dt)")
    p.add_argument("--seed", type=int)
    out(p)
    p.set_defaults(func=cmd_repatch_sim)

    p = sub.add_parser("energy", help="energy report -> CSV or JSON")
    p.add_argument("model", choices=["optical", "electronic", "hybrid"])
    p.add_argument("--preset", choices=sorted(energy.PRESETS), help="default: alexnet")
    p.add_argument("--format", choices=["csv", "json"], help="default: csv")
    out(p)
    p.set_defaults(func=cmd_energy, params=None)
    return ap


def apply_config(args, parser) -> None:
    doc = json.loads(Path(args.config).read_text())
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    for key, value in doc.items():
        if key == "params":
            if args.params is None:
                args.params = value
            continue
        if not hasattr(args, key):
            raise UsageError(f"config key {key!r} is not an option of '{args.command}'")
        if getattr(args, key) is None:
            setattr(args, key, value)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            apply_config(args, parser)
        args.func(args)
    except (OptoCNNError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"optocnn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"optocnn {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


run_cli = main

if __name__ == "__main__":
    sys.exit(main())
