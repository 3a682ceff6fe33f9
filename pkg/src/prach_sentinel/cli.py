"""
Command-line driver: ``prach-sentinel {gen,train,eval,xfer,detect,report}``.

Exit codes: 0 success, 2 configuration error, 3 I/O error,
4 numerical divergence.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .cnn import PrachCNN, load_model, save_model, train
from .config import load_config
from .dataset import (generate_dataset, load_dataset, sample_seed, save_dataset, split,
                      worker_count)
from .exceptions import (ConfigValidationError, DatasetLoadError, DivergedTrainingError,
                         InvalidArgumentError, ModelLoadError)
from .metrics import baseline_compare, evaluate
from .receiver import correlate, detect, front_end
from .scenario import simulate_observation
from .zc import zc_root

log = logging.getLogger("prach_sentinel")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4

# fixed stream tags for seeds derived from the master seed
_SPLIT, _INIT, _SHUFFLE, _XFER, _DETECT = (1 << 40) + 1, (1 << 40) + 2, (1 << 40) + 3, (1 << 40) + 4, (1 << 40) + 5


def derive_seed(master, tag):
    return sample_seed(master, tag) >> 1


def _grid(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _overrides(args):
    flags = {
        "seed": "seed",
        "epochs": "train.epochs",
        "snr_grid": "snr_grid",
        "interf_grid": "interf_grid",
        "seqidx_signal": "scenario.signal.seq_idx",
        "seqidx_interf": "scenario.interferer.seq_idx",
        "threshold_factor": "receiver.threshold_factor",
        "n_per_cell": "dataset.n_per_cell",
        "n_samples": "dataset.n_samples",
    }
    out = {key: getattr(args, flag) for flag, key in flags.items()
           if getattr(args, flag, None) is not None}
    if "dataset.n_per_cell" in out and "dataset.n_samples" not in out:
        out["dataset.n_samples"] = None
    if "dataset.n_samples" in out and "dataset.n_per_cell" not in out:
        out["dataset.n_per_cell"] = None
    return out


def _resolve(args, base=None):
    """Flags over ``--config`` over the embedded echo ``base`` over defaults."""
    return load_config(args.config, _overrides(args), base=base)


def _write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dataset_from_config(cfg, master_seed, scenario=None):
    d = cfg.dataset
    return generate_dataset(
        n_per_cell=d.n_per_cell, n_samples=d.n_samples, balance=d.balance,
        snr_grid=cfg.snr_grid, interf_grid=cfg.interf_grid, master_seed=master_seed,
        cfg=scenario or cfg.scenario, n_jobs=worker_count(),
    )


def cmd_gen(args):
    cfg = _resolve(args)
    print(f"master seed: {cfg.seed}")
    ds = _dataset_from_config(cfg, cfg.seed)
    ds.meta.scenario = {**ds.meta.scenario, "experiment": cfg.to_dict()}
    out = args.out or os.path.join(cfg.output_dir, "dataset.prds")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_dataset(ds, out)
    print(f"wrote {len(ds)} samples ({int(ds.labels.sum())} interfered) to {out}")
    cells = {}
    for snr, itf in zip(ds.snr_db, ds.interf_db):
        key = (snr, "none" if np.isnan(itf) else itf)
        cells[key] = cells.get(key, 0) + 1
    for (snr, itf), n in sorted(cells.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        print(f"  snr {snr:g} dB, interference {itf if itf == 'none' else format(itf, 'g')}: {n}")
    return EXIT_OK


def _experiment_echo(ds):
    return ds.meta.scenario.get("experiment")


def _split_for(cfg, ds):
    return split(ds, cfg.dataset.train_frac, derive_seed(cfg.seed, _SPLIT))


def cmd_train(args):
    ds = load_dataset(args.dataset)
    cfg = _resolve(args, base=_experiment_echo(ds))
    print(f"master seed: {cfg.seed}")
    tr, va = _split_for(cfg, ds)
    model = PrachCNN(seed=derive_seed(cfg.seed, _INIT))
    tcfg = replace(cfg.train, seed=derive_seed(cfg.seed, _SHUFFLE))
    history = train(model, tr, va, tcfg, log=lambda r: log.info(
        "epoch %(epoch)d train_loss %(train_loss).4f train_acc %(train_acc).4f "
        "val_loss %(val_loss).4f val_acc %(val_acc).4f", r))
    out = args.out or os.path.join(cfg.output_dir, "model.prnn")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_model(model, out)
    _write(out + ".history.csv", history.to_csv())
    _write(out + ".json", json.dumps({
        "config": cfg.to_dict(), "dataset": os.path.abspath(args.dataset),
        "n_train": len(tr), "n_val": len(va), "history": history.to_dict(),
    }, indent=2, sort_keys=True))
    last = history.rows[-1]
    print(f"trained {tcfg.epochs} epochs in {history.train_time_s:.1f} s: "
          f"train_acc {last['train_acc']:.4f}, val_acc {last['val_acc']:.4f}")
    print(f"wrote {out}, {out}.history.csv, {out}.json")
    return EXIT_OK


def _model_sidecar(model_path):
    try:
        with open(model_path + ".json", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        return {}


def cmd_eval(args):
    model = load_model(args.model)
    ds = load_dataset(args.dataset)
    side = _model_sidecar(args.model)
    cfg = _resolve(args, base=side.get("config") or _experiment_echo(ds))
    if args.subset != "all":
        tr, va = _split_for(cfg, ds)
        ds = tr if args.subset == "train" else va
    train_time = side.get("history", {}).get("train_time_s")
    report = evaluate(model, ds, train_time_s=train_time,
                      config={"experiment": cfg.to_dict(), "subset": args.subset,
                              "model": os.path.abspath(args.model)})
    result = {"cnn": report.to_dict()}
    if args.baseline:
        result["baseline"] = baseline_compare(ds, cfg.scenario, cfg.receiver.threshold_factor).to_dict()
    out = args.out or os.path.join(cfg.output_dir, "eval")
    _write(out + ".json", json.dumps(result, indent=2, sort_keys=True))
    _write(out + ".csv", report.to_csv())
    m = report.metrics
    print(f"{len(ds)} samples: accuracy {m.accuracy:.4f} precision {m.precision:.4f} "
          f"recall {m.recall:.4f} f1 {m.f1:.4f}")
    print(f"wrote {out}.json, {out}.csv")
    return EXIT_OK


def run_xfer(model, cfg, n_samples=None, train_time_s=None):
    """Evaluate ``model`` on fresh data with the trained and the overridden interferer root."""
    trained_idx = cfg.scenario.interferer.seq_idx
    xfer_seed = derive_seed(cfg.seed, _XFER)
    if n_samples is not None:
        cfg = replace(cfg, dataset=replace(cfg.dataset, n_samples=n_samples, n_per_cell=None))
    reports = {}
    for idx in (trained_idx, cfg.xfer_seqidx_interf):
        scenario = replace(cfg.scenario, interferer=replace(cfg.scenario.interferer, seq_idx=idx))
        ds = _dataset_from_config(cfg, xfer_seed, scenario)
        reports[f"seqidx_{idx}"] = evaluate(
            model, ds, train_time_s=train_time_s,
            config={"experiment": cfg.to_dict(), "interferer_seq_idx": idx,
                    "inference_master_seed": xfer_seed})
    return reports


def cmd_xfer(args):
    model = load_model(args.model)
    side = _model_sidecar(args.model)
    cfg = _resolve(args, base=side.get("config"))
    if args.seqidx_interf is not None and side.get("config"):
        # --seqidx-interf names the inference-time root, not the trained one
        trained = side["config"]["scenario"]["interferer"]["seq_idx"]
        cfg = replace(cfg, xfer_seqidx_interf=args.seqidx_interf,
                      scenario=replace(cfg.scenario, interferer=replace(cfg.scenario.interferer, seq_idx=trained)))
    print(f"master seed: {cfg.seed}")
    reports = run_xfer(model, cfg, args.n_samples, side.get("history", {}).get("train_time_s"))
    out = args.out or os.path.join(cfg.output_dir, "xfer.json")
    _write(out, json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2, sort_keys=True))
    for key, r in reports.items():
        m = r.metrics
        print(f"{key}: accuracy {m.accuracy:.4f} precision {m.precision:.4f} "
              f"recall {m.recall:.4f} f1 {m.f1:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_detect(args):
    cfg = _resolve(args)
    print(f"master seed: {cfg.seed}", file=sys.stderr)
    num = cfg.scenario.numerology
    obs = simulate_observation(cfg.scenario, args.snr, args.interf, derive_seed(cfg.seed, _DETECT))
    fobs = front_end(obs, num, cfg.receiver.df_correction_hz, cfg.receiver.decim)
    pdp = correlate(fobs, zc_root(cfg.scenario.signal.seq_idx, num.n_zc))
    result = detect(pdp, cfg.scenario.signal.n_cs, cfg.receiver.threshold_factor)
    payload = {"detection": result.to_dict(), "snr_db": args.snr, "interf_power_db": args.interf,
               "ta_scale_samples_per_lag": num.fft_size / num.n_zc, "config": cfg.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        _write(args.out, text)
    print(text)
    return EXIT_OK


def cmd_report(args):
    rows, header = [], None
    for path in args.inputs:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            h = next(reader)
            if header is None:
                header = h
            elif h != header:
                raise InvalidArgumentError(f"{path}: columns {h} differ from {header}")
            rows.extend([path] + r for r in reader)
    if header is None:
        raise InvalidArgumentError("no input CSVs")
    out = args.out or "report.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source"] + header)
        writer.writerows(rows)
    print(f"merged {len(rows)} rows from {len(args.inputs)} files into {out}")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--epochs", type=int)
    common.add_argument("--snr-grid", type=_grid, help="comma-separated SNRs in dB")
    common.add_argument("--interf-grid", type=_grid, help="comma-separated interference powers in dB")
    common.add_argument("--seqidx-signal", type=int)
    common.add_argument("--seqidx-interf", type=int)
    common.add_argument("--threshold-factor", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="prach-sentinel", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a labeled dataset")
    p.add_argument("--n-per-cell", type=int)
    p.add_argument("--n-samples", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train the CNN on a dataset")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--subset", choices=("all", "train", "val"), default="all")
    p.add_argument("--baseline", action="store_true", help="also score the correlation baseline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("xfer", parents=[common], help="evaluate with the interferer root overridden")
    p.add_argument("--model", required=True)
    p.add_argument("--n-samples", type=int)
    p.set_defaults(func=cmd_xfer)

    p = sub.add_parser("detect", parents=[common], help="run the correlation receiver once")
    p.add_argument("--snr", type=float, default=-6.0)
    p.add_argument("--interf", type=float, default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("report", help="merge report CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergedTrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DatasetLoadError, ModelLoadError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidArgumentError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
