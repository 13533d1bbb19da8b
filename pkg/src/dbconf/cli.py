"""Command-line harness.

Subcommands: synth, align, train, eval, run, attention, params,
gradcheck. A flat key=value config file (see README) maps onto
RunConfig/ModelConfig; command-line flags override it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import checkpoint, dataio
from .align import AlignState, align
from .gradcheck import model_grad_check, small_check_config
from .model import Model, ModelConfig, parameter_count
from .runner import (EAConfig, RunConfig, evaluate_model, export_attention,
                     run_protocol, train_one, write_report)


def parse_flat_config(path) -> dict:
    """key = value lines; '#' comments; dotted keys for nesting."""
    out = {}
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def _coerce(value: str, typ):
    if typ is bool:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ is tuple:
        return tuple(int(s) for s in value.split(","))
    return typ(value)


def _apply_prefixed(obj, flat: dict, prefix: str):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in flat.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix):]
        if "." in name or name not in fields:
            continue
        typ = fields[name].type
        base = {"int": int, "float": float, "str": str, "bool": bool,
                "tuple": tuple}.get(str(typ).split("[")[0].strip(), None)
        if base is None:
            base = type(getattr(obj, name)) if getattr(obj, name) is not None else str
        setattr(obj, name, _coerce(value, base))


def build_run_config(flat: dict) -> RunConfig:
    rc = RunConfig()
    _apply_prefixed(rc, flat, "")
    _apply_prefixed(rc.ea, flat, "ea.")
    return rc


def build_model_config(flat: dict, channels=None, time_samples=None,
                       args=None) -> ModelConfig:
    mc = ModelConfig(channels=channels or 8, time_samples=time_samples or 512)
    _apply_prefixed(mc, flat, "model.")
    if channels is not None:
        mc.channels = channels
    if time_samples is not None:
        mc.time_samples = time_samples
    if args is not None:
        if getattr(args, "no_spatial_branch", False):
            mc.use_spatial_branch = False
        if getattr(args, "no_positional_encoding", False):
            mc.use_positional_encoding = False
        if getattr(args, "mean_pool_channels", False):
            mc.mean_pool_channels = True
    return mc


def _load_flat(args) -> dict:
    return parse_flat_config(args.config) if args.config else {}


def _load_sets(data_dir):
    paths = sorted(p for p in os.listdir(data_dir) if p.endswith(".eegb"))
    if not paths:
        raise FileNotFoundError(f"no .eegb files in {data_dir}")
    return [dataio.read_trialset(os.path.join(data_dir, p)) for p in paths]


def _add_ablation_flags(p):
    p.add_argument("--no-spatial-branch", action="store_true")
    p.add_argument("--no-positional-encoding", action="store_true")
    p.add_argument("--mean-pool-channels", action="store_true")


def cmd_synth(args):
    spec = dataio.SynthSpec(
        n_subjects=args.subjects, trials_per_subject=args.trials,
        channels=args.channels, time_samples=args.samples,
        sample_rate=args.rate, attenuation=args.attenuation)
    sets, meta = dataio.generate_synthetic(spec, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    for ts in sets:
        dataio.write_trialset(
            os.path.join(args.out_dir, f"subject_{ts.subject_id:02d}.eegb"),
            ts)
    with open(os.path.join(args.out_dir, "meta.json"), "w") as f:
        json.dump(meta, f, indent=1)
    print(f"wrote {len(sets)} subjects to {args.out_dir} "
          f"(informative channels {meta['informative_channels']})")


def cmd_align(args):
    ts = dataio.read_trialset(args.input)
    state = AlignState(ts.trials)
    out = dataio.TrialSet(ts.subject_id, ts.sample_rate,
                          align(ts.trials, state), ts.labels,
                          ts.chronological_index)
    dataio.write_trialset(args.output, out)
    print(f"aligned {ts.n_trials} trials -> {args.output}")


def cmd_train(args):
    flat = _load_flat(args)
    rc = build_run_config(flat)
    ts = dataio.read_trialset(args.data)
    mc = build_model_config(flat, ts.n_channels, ts.n_samples, args)
    x, y = ts.trials, ts.labels
    if rc.ea.enabled:
        x = align(x, AlignState(x))
    model, history = train_one(mc, x, y, args.seed, lr=rc.lr,
                               epochs=rc.epochs, batch_size=rc.batch_size)
    checkpoint.save(args.out, model)
    print(f"final loss {history[-1]:.4f}; checkpoint -> {args.out}")


def cmd_eval(args):
    model = checkpoint.load(args.checkpoint)
    ts = dataio.read_trialset(args.data)
    x = ts.trials
    if args.ea:
        x = align(x, AlignState(x))
    rep = evaluate_model(model, x, ts.labels, full=args.full)
    for k, v in rep.to_dict().items():
        print(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}")


def cmd_run(args):
    flat = _load_flat(args)
    rc = build_run_config(flat)
    if args.protocol:
        rc.protocol = args.protocol
    sets = _load_sets(args.data_dir)
    mc = build_model_config(flat, sets[0].n_channels, sets[0].n_samples, args)
    record = run_protocol(rc, mc, sets)
    out_dir = args.out or rc.out_dir or "."
    path = write_report(record, out_dir)
    print(f"{rc.protocol} mean accuracy "
          f"{record.mean_accuracy:.2f} +/- {record.std_accuracy:.2f} "
          f"over seeds {list(record.seeds)}; report -> {path}")


def cmd_attention(args):
    model = checkpoint.load(args.checkpoint)
    ts = dataio.read_trialset(args.data)
    x = ts.trials
    if args.ea:
        x = align(x, AlignState(x))
        ts = dataio.TrialSet(ts.subject_id, ts.sample_rate, x, ts.labels,
                             ts.chronological_index)
    weights = export_attention(model, ts, args.out)
    print(f"wrote {weights.shape[0]} rows x {weights.shape[1]} channels "
          f"-> {args.out}")


def cmd_params(args):
    flat = _load_flat(args)
    mc = build_model_config(flat, args.channels, args.samples, args)
    total, breakdown = parameter_count(mc)
    for k, v in breakdown.items():
        print(f"{k}={v}")
    print(f"total={total}")
    model = Model(mc, seed=0)
    assert model.n_parameters() == total


def cmd_gradcheck(args):
    cfg = small_check_config()
    report = model_grad_check(cfg, seed=args.seed, h=args.h)
    worst = 0.0
    for name, err in sorted(report.items()):
        print(f"{name}={err:.3e}")
        worst = max(worst, err)
    status = "PASS" if worst <= args.threshold else "FAIL"
    print(f"max_relative_error={worst:.3e} threshold={args.threshold:g} "
          f"{status}")
    return 0 if status == "PASS" else 1


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="dbconf",
        description="Dual-branch convolutional-Transformer EEG decoder")
    ap.add_argument("--config", help="flat key=value config file")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", help="output path/directory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic MI-like data")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--rate", type=float, default=256.0)
    p.add_argument("--attenuation", type=float, default=0.5)
    # also accepted after the subcommand; falls back to the global --seed
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("align", help="Euclidean-align a trial-set file")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("train", help="train on one trial-set file")
    p.add_argument("--data", required=True)
    _add_ablation_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a trial set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ea", action="store_true")
    p.add_argument("--full", action="store_true", help="report F1/BCA/AUC too")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("run", help="full protocol over a data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--protocol", choices=("CO", "CV", "LOSO"))
    _add_ablation_flags(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("attention", help="export channel-attention scores")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ea", action="store_true")
    p.set_defaults(fn=cmd_attention)

    p = sub.add_parser("params", help="parameter-count breakdown")
    p.add_argument("--channels", type=int, default=22)
    p.add_argument("--samples", type=int, default=1000)
    _add_ablation_flags(p)
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("gradcheck", help="finite-difference model check")
    p.add_argument("--h", type=float, default=5e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(fn=cmd_gradcheck)

    args = ap.parse_args(argv)
    if args.command == "train" and not args.out:
        ap.error("train requires --out CHECKPOINT")
    if args.command == "attention":
        args.out = args.out or "attention.csv"
    rc = args.fn(args)
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
