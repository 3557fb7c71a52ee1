"""Command-line entry point: ``helmfno <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .dataset import WaveDataset, build_dataset, model_seed
from .fdtd import AbsorbingBoundary, SourceSpec, TimeGrid, simulate
from .helmholtz import assemble, ricker_spectrum, solve
from .operators import new_handle
from .spectral import bandpass, reconstruct_time, time_to_freq
from .training import TrainConfig, evaluate_mse, train
from .velocity import FAMILIES, Grid, constant_model, default_spec, synthesize

log = logging.getLogger("helmfno")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like LO:HI, got {text!r}") from None
    return lo, hi


def _grid(text: str) -> Grid:
    try:
        return Grid.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _model_from_args(args):
    """Velocity model from ``--in DIR --model I`` or ``--constant V``."""
    if args.constant is not None:
        return constant_model(args.grid, args.constant)
    if args.input is None:
        raise ValueError("give a dataset with --in or a homogeneous model with --constant")
    return io.read_dataset(args.input).model(args.model)


def _boundary(args) -> AbsorbingBoundary:
    return AbsorbingBoundary(args.pad, args.alpha)


def _add_model_args(p):
    p.add_argument("--in", dest="input", help="dataset directory holding velocity models")
    p.add_argument("--model", type=int, default=0, help="model index inside the dataset")
    p.add_argument("--constant", type=float, help="homogeneous velocity (m/s) instead of a dataset")
    p.add_argument("--grid", type=_grid, default=Grid(), help="grid for --constant, e.g. 70x70")
    p.add_argument("--source-x", type=float, default=690.0)
    p.add_argument("--source-z", type=float, default=10.0)
    p.add_argument("--f-p", type=float, default=15.0, help="Ricker peak frequency (Hz)")
    p.add_argument("--pad", type=int, default=120, help="absorbing layers per side")
    p.add_argument("--alpha", type=float, default=0.0015, help="damping coefficient")


def _write_json(obj, path: str | None):
    text = json.dumps(io._jsonable(obj), indent=2, sort_keys=True, default=str)
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    else:
        print(text)


# -- commands --------------------------------------------------------------

def cmd_gen_velocity(args):
    spec = default_spec(args.family)
    seeds = [model_seed(args.seed, i) for i in range(args.count)]
    vel = np.stack([synthesize(spec, args.grid, s).values for s in seeds]).astype(np.float32)
    ds = WaveDataset(args.grid, TimeGrid(), AbsorbingBoundary(), spec, args.seed, seeds, vel, [], [],
                     np.zeros((args.count, 0, 0, 2) + args.grid.shape, dtype=np.float32))
    io.write_dataset(ds, args.out)
    log.info("wrote %d %s models to %s", args.count, args.family, args.out)


def cmd_simulate(args):
    v = _model_from_args(args)
    src = SourceSpec(args.source_x, args.source_z, f_p=args.f_p)
    tg = TimeGrid(args.dt, args.nt)
    w = simulate(v, src, tg, _boundary(args), backend=args.backend)
    io.save_array(w.p, args.out)
    if args.freqs:
        for fw in time_to_freq(w, args.freqs):
            stem = f"{args.out}.{fw.frequency:g}Hz"
            io.save_array(np.stack([fw.u.real, fw.u.imag]), stem)
    log.info("simulated %s steps on %dx%d with backend %s", tg.n_t, *v.grid.shape, w.meta["backend"])


def cmd_build_dataset(args):
    ds = build_dataset(args.family, args.count, args.seed, args.grid, args.sources, args.freqs,
                       TimeGrid(args.dt, args.nt), _boundary(args), backend=args.backend,
                       fractional=args.fractional)
    if args.noise:
        ds = ds.with_label_noise(args.noise, args.seed)
    io.write_dataset(ds, args.out)
    log.info("wrote %d models x %d sources x %d frequencies to %s",
             ds.n_models, len(ds.sources), len(ds.freqs), args.out)


def cmd_helmholtz_solve(args):
    v = _model_from_args(args)
    src = SourceSpec(args.source_x, args.source_z, f_p=args.f_p)
    system = assemble(v, args.freq, _boundary(args), args.stencil)
    amp = ricker_spectrum(src, TimeGrid(args.dt, args.nt), args.freq) if args.ricker else 1.0
    u = solve(system, src.node(v.grid), amp)
    io.save_array(np.stack([u.u.real, u.u.imag]), args.out)
    _write_json({"experiment": "helmholtz-solve", "freq": args.freq, "stencil": args.stencil,
                 "residual": system.meta["residual"], "factor_seconds": system.meta["factor_seconds"]},
                None)


def _handle_config(args, ds) -> dict:
    if args.arch == "fno":
        single = len(ds.sources) == 1 and len(ds.freqs) == 1
        return {"width": args.width or 32, "modes": args.modes, "in_channels": 3 if single else 5}
    if args.arch == "pfno":
        cfg = {"frequencies": ds.freqs, "modes": args.modes}
        if args.width:
            cfg["widths"] = {str(float(f)): args.width for f in ds.freqs}
        return cfg
    if len(ds.sources) != 1 or len(ds.freqs) != 1:
        raise ValueError("forwardnet handles one source and one frequency")
    return {}


def cmd_train(args):
    ds = io.read_dataset(args.data)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                         decay_every=args.decay_every, seed=args.seed, loss=args.loss,
                         n_train=args.n_train or ds.n_models - 1,
                         n_test=ds.n_models - (args.n_train or ds.n_models - 1))
    train_ds, test_ds = ds.split(config.n_train)
    handle = new_handle(args.arch, _handle_config(args, ds), seed=args.seed)
    t = time.perf_counter()
    result = train(handle, train_ds, config, test_ds)
    seconds = time.perf_counter() - t
    opt = next(iter(result.optimizers.values())) if len(result.optimizers) == 1 else None
    io.save_checkpoint(handle, args.out, result.history, optimizer=opt, seed=args.seed)
    report = {"experiment": "train", "config": {"arch": args.arch, **config.to_dict(),
                                                "model": handle.config_dict(), "data": str(args.data)},
              "results": {"initial_test_mse": result.history["test_mse"][0][1],
                          "final_test_mse": result.history["test_mse"][-1][1],
                          "final_train_loss": result.history["train_loss"][-1]
                          if result.history["train_loss"] else None},
              "timing": {"train_seconds": seconds}}
    _write_json(report, str(args.out) + ".report.json")
    log.info("saved %s (test mse %.4e)", args.out, report["results"]["final_test_mse"])


def cmd_eval(args):
    handle = io.load_checkpoint(args.checkpoint)
    ds = io.read_dataset(args.data)
    if args.models:
        lo, hi = args.models
        ds = ds.subset(range(int(lo), int(hi)))
    mse = evaluate_mse(handle, ds)
    _write_json({"experiment": "eval", "config": {"checkpoint": str(args.checkpoint),
                                                  "data": str(args.data)},
                 "results": {"mse": mse, "samples": len(ds)}}, args.out)


def cmd_bench(args):
    from .experiments import bench_helmholtz, bench_surrogate

    records = []
    if args.checkpoint or args.arch:
        handle = (io.load_checkpoint(args.checkpoint) if args.checkpoint
                  else new_handle(args.arch, {"frequencies": [10.0]} if args.arch == "pfno" else {}))
        for n in args.instances:
            records.append(bench_surrogate(handle, n, args.batch_size, args.reps, seed=args.seed))
    for n in args.helmholtz_sizes or []:
        records.append(bench_helmholtz(n, args.freq, AbsorbingBoundary(args.pad), reps=args.reps))
    if not records:
        raise ValueError("nothing to benchmark: give --checkpoint/--arch or --helmholtz-sizes")
    _write_json({"experiment": "bench", "config": vars_clean(args),
                 "results": {"records": [r.to_dict() for r in records]}}, args.out)


def cmd_reconstruct(args):
    v = _model_from_args(args)
    src = SourceSpec(args.source_x, args.source_z, f_p=args.f_p)
    tg = TimeGrid(args.dt, args.nt)
    w = simulate(v, src, tg, _boundary(args), backend=args.backend)
    lo, hi = args.band
    bins = [k / (tg.n_t * tg.dt) for k in range(tg.n_t // 2 + 1) if lo <= k / (tg.n_t * tg.dt) <= hi]
    rec = reconstruct_time(time_to_freq(w, bins), tg, v.grid)
    ref = bandpass(w, lo, hi)
    rms = float(np.sqrt(np.mean((rec.p - ref.p) ** 2)) / np.sqrt(np.mean(ref.p ** 2)))
    if args.out:
        io.save_array(rec.p, args.out)
    _write_json({"experiment": "reconstruct", "band": [lo, hi], "bins": len(bins),
                 "relative_rms_vs_bandpass": rms}, None)


def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)}


def _flatten(prefix: str, obj, out: dict):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, (int, float, str, bool)) or obj is None:
        out[prefix] = obj


def cmd_report(args):
    root = Path(args.input)
    files = sorted(root.rglob("*.json")) if root.is_dir() else [root]
    rows = []
    for f in files:
        try:
            doc = json.loads(f.read_text())
        except json.JSONDecodeError:
            continue
        if not isinstance(doc, dict) or "experiment" not in doc:
            continue
        row = {"experiment": doc["experiment"], "source": str(f.relative_to(root) if root.is_dir() else f),
               "config_hash": io.config_hash(doc.get("config", {}))}
        flat = {}
        _flatten("", doc.get("results", {}), flat)
        _flatten("timing", doc.get("timing", {}), flat)
        row.update(flat)
        rows.append(row)
    if args.format == "json":
        print(json.dumps(rows, indent=2, sort_keys=True))
        return
    keys = ["experiment", "config_hash", "source"]
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    sys.stdout.write(buf.getvalue())


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="helmfno", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", metavar="command")

    def time_args(p):
        p.add_argument("--dt", type=float, default=0.001)
        p.add_argument("--nt", type=int, default=1000)
        p.add_argument("--backend", choices=("cython", "python"), default=None)

    p = sub.add_parser("gen-velocity", help="synthesize velocity models")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid", type=_grid, default=Grid())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_velocity)

    p = sub.add_parser("simulate", help="time-domain simulation of one shot")
    _add_model_args(p)
    time_args(p)
    p.add_argument("--freqs", type=_floats, default=None, help="also write these frequency fields")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-dataset", help="models plus frequency-domain labels")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--sources", type=int, default=1)
    p.add_argument("--freqs", type=_floats, default=[10.0])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--grid", type=_grid, default=Grid())
    p.add_argument("--pad", type=int, default=120)
    p.add_argument("--alpha", type=float, default=0.0015)
    p.add_argument("--noise", type=float, default=0.0, help="frozen label-noise std")
    p.add_argument("--fractional", action="store_true", help="allow off-bin frequencies")
    time_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("helmholtz-solve", help="direct frequency-domain solve")
    _add_model_args(p)
    p.add_argument("--dt", type=float, default=0.001)
    p.add_argument("--nt", type=int, default=1000)
    p.add_argument("--freq", type=float, required=True)
    p.add_argument("--stencil", choices=("9pt", "5pt"), default="9pt")
    p.add_argument("--ricker", action="store_true", help="scale the source by the wavelet spectrum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_helmholtz_solve)

    p = sub.add_parser("train", help="train a surrogate on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=("fno", "pfno", "forwardnet"), default="fno")
    p.add_argument("--width", type=int, default=None, help="FNO width (PFNO: overrides the rule)")
    p.add_argument("--modes", type=int, default=12)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1.6e-3)
    p.add_argument("--decay-every", type=int, default=125)
    p.add_argument("--loss", choices=("l2", "mse"), default="l2")
    p.add_argument("--n-train", type=int, default=None, help="leading models used for training")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="checkpoint file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="MSE of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--models", type=_band, default=None, help="model range LO:HI")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="timing of surrogate inference and the direct solver")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--arch", choices=("fno", "pfno", "forwardnet"), default=None)
    p.add_argument("--instances", type=_ints, default=[64, 640, 3000])
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--helmholtz-sizes", type=_ints, default=None)
    p.add_argument("--freq", type=float, default=10.0)
    p.add_argument("--pad", type=int, default=20)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("reconstruct", help="band-limited time reconstruction from frequency bins")
    _add_model_args(p)
    time_args(p)
    p.add_argument("--band", type=_band, default=(11.0, 20.0), help="LO:HI in Hz")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("report", help="collect experiment reports into one table")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, OSError, FloatingPointError, np.linalg.LinAlgError) as e:
        log.error("%s failed: %s", args.command, e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
