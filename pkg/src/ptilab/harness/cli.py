"""Command-line entry point.

Exit status: 0 on success, 1 for configuration errors, 2 for runtime or
numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..dataset import MixtureSpec, component_nll
from ..editor import edit_with_pti
from ..inversion import ddim_reconstruct, null_text_inversion, prompt_tuning_inversion
from ..metrics import mse, psnr_from_mse, ssim
from ..numerics import RngState
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint, save_pti_result
from .config import ConfigError, RunConfig
from .experiments import (
    DATA_STREAM,
    edit_inputs,
    recon_inputs,
    run_grid_experiment,
    run_inversion_bench,
    run_tradeoff,
    sample_dataset,
    train,
    write_report,
)

log = logging.getLogger("ptilab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", type=Path, default=default, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=default, help="root seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, default=default, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptilab", description="Prompt tuning inversion lab on synthetic data.")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _globals(p, suppress=True)
        return p

    p = add("gen-data", "write synthetic samples as CSV")
    p.add_argument("--n", type=int, help="number of samples (default: dataset.n_train)")
    p.add_argument("--dataset", choices=["mixture", "shapes"])

    p = add("train", "train the denoiser and write a checkpoint")
    p.add_argument("--data", type=Path, help="training CSV from gen-data (default: generate from seed)")
    p.add_argument("--steps", type=int)

    p = add("invert", "reconstruct the fixed test set")
    p.add_argument("--method", choices=["ddim", "nti", "pti"], required=True)
    p.add_argument("--checkpoint", type=Path)

    p = add("edit", "edit source-class inputs toward a target class")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--input", type=Path, help="CSV of points to edit (gen-data format)")
    p.add_argument("--checkpoint", type=Path)

    for name, help_ in (
        ("grid", "guidance mismatch grid"),
        ("bench", "inversion benchmark (ddim / nti / pti)"),
        ("tradeoff", "editability-fidelity sweep over eta"),
    ):
        add(name, help_).add_argument("--checkpoint", type=Path)
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=str(args.out))
    if args.command == "gen-data" and args.dataset:
        cfg = replace(cfg, dataset=replace(cfg.dataset, kind=args.dataset))
    if args.command == "train" and args.steps is not None:
        cfg = replace(cfg, train=replace(cfg.train, steps=args.steps))
    cfg.validate()
    return cfg


def _data_csv(X, labels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(X.shape[1])] + ["label"])
    for x, k in zip(X, labels):
        w.writerow([repr(float(v)) for v in x] + [int(k)])
    return buf.getvalue()


def read_data_csv(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        header, body = rows[0], rows[1:]
        if header[-1] != "label" or header[:-1] != [f"x{i}" for i in range(len(header) - 1)]:
            raise ValueError(f"unexpected header {header}")
        X = np.array([[float(v) for v in r[:-1]] for r in body], dtype=np.float64)
        labels = np.array([int(r[-1]) for r in body], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed data CSV {path}: {exc}") from exc
    return X, labels


def _checkpoint_path(cfg, args) -> Path:
    return args.checkpoint or Path(cfg.output_dir) / "model.ckpt.json"


def _load_model(cfg, args):
    model, sched, _ = load_checkpoint(_checkpoint_path(cfg, args))
    spec = cfg.data_spec()
    if model.d != spec.d or model.n_classes != spec.K:
        raise ConfigError("checkpoint dimensions do not match the configured dataset")
    return model, sched


def cmd_gen_data(cfg, args, out: Path):
    n = args.n if args.n is not None else cfg.dataset.n_train
    if n < 1:
        raise ConfigError("--n must be >= 1")
    X, labels = sample_dataset(cfg, n, RngState(cfg.seed).derive(DATA_STREAM))
    path = out / "data.csv"
    path.write_text(_data_csv(X, labels))
    return path


def cmd_train(cfg, args, out: Path):
    if args.data:
        X, labels = read_data_csv(args.data)
        if X.shape[1] != cfg.data_spec().d:
            raise ConfigError("data dimension does not match configuration")
        result = train(cfg, X, labels)
    else:
        result = train(cfg)
    path = out / "model.ckpt.json"
    save_checkpoint(result.model, cfg.noise_schedule(), path, seed=cfg.seed, training_steps=cfg.train.steps)
    rows = [[i + 1, float(v)] for i, v in enumerate(result.losses)]
    write_report(out / "train_loss.csv", cfg, ["step", "loss"], rows)
    return path


def cmd_invert(cfg, args, out: Path):
    model, sched = _load_model(cfg, args)
    steps = cfg.ddim_steps()
    X, labels = recon_inputs(cfg)
    C = model.embed_table[labels + 1]
    pcfg = cfg.pti_config()
    if args.method == "ddim":
        R = ddim_reconstruct(X, C, 0.0, pcfg.omega, steps, sched, model)
    else:
        if args.method == "pti":
            res = prompt_tuning_inversion(X, C, pcfg, steps, sched, model)
        else:
            res = null_text_inversion(X, C, None, pcfg, steps, sched, model)
        save_pti_result(res, out / f"invert_{args.method}.result.json")
        R = res.recon
    shapes = cfg.dataset.kind == "shapes"
    cols = ["index", "label", "mse", "psnr_db"] + (["ssim"] if shapes else [])
    rows = []
    for i, (x, r, k) in enumerate(zip(X, R, labels)):
        err = mse(x, r)
        rows.append([i, int(k), err, psnr_from_mse(err)] + ([ssim(x, r)] if shapes else []))
    return write_report(out / f"invert_{args.method}.csv", cfg, cols, rows)


def cmd_edit(cfg, args, out: Path):
    model, sched = _load_model(cfg, args)
    spec = cfg.data_spec()
    if not isinstance(spec, MixtureSpec):
        raise ConfigError("edit needs the mixture dataset")
    if not 0 <= args.target < spec.K:
        raise ConfigError(f"--target {args.target} outside [0, {spec.K})")
    try:
        ecfg = cfg.edit_config(eta=args.eta, target=args.target)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    X = read_data_csv(args.input)[0] if args.input else edit_inputs(cfg)
    E = edit_with_pti(X, ecfg, cfg.ddim_steps(), sched, model)
    d = X.shape[1]
    cols = ["index"] + [f"x{i}" for i in range(d)] + [f"edit{i}" for i in range(d)] + ["alignment_nll", "fidelity_l2"]
    nll = component_nll(spec, E, ecfg.target_class)
    dist = np.sqrt(((E - X) ** 2).sum(-1))
    rows = [[i, *x, *e, a, f] for i, (x, e, a, f) in enumerate(zip(X, E, nll, dist))]
    return write_report(out / "edit.csv", cfg, cols, rows)


def cmd_runner(cfg, args, out: Path):
    model, sched = _load_model(cfg, args)
    runner = {"grid": run_grid_experiment, "bench": run_inversion_bench, "tradeoff": run_tradeoff}[args.command]
    cols, rows = runner(cfg, model, sched)
    return write_report(out / f"{args.command}.csv", cfg, cols, rows)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "invert": cmd_invert,
    "edit": cmd_edit,
    "grid": cmd_runner,
    "bench": cmd_runner,
    "tradeoff": cmd_runner,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, FloatingPointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
