"""Command-line front end.

Verbs: gen, train, eval, sweep-nmse, sweep-complexity, throughput.
All experiment state lives in the config file; ``--set key=value``
overrides are applied after parsing and echoed into the metadata
sidecar so published CSVs are reproducible from config plus seeds.
Exit codes: 0 success, 1 config/usage error, 2 runtime error.
"""

import argparse
import json
import os
import sys

from . import harness, nn, windows

OUT_DIR_ENV = "CSIPRED_OUT"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csipred",
        description="Effective-SINR prediction workbench: dataset "
                    "generation, predictor training, and NMSE/throughput "
                    "sweeps.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", default=None,
                       help="key = value experiment config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="config override")
        p.add_argument("--out", default=None, help="output directory "
                       f"(default ./out, env {OUT_DIR_ENV} overrides)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the base experiment seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel sweep points")
        return p

    p = common(sub.add_parser("gen", help="generate a window dataset"))
    p.add_argument("--profile", default="TDL-A")
    p.add_argument("--doppler", type=float, default=10.0)

    p = common(sub.add_parser("train", help="train one predictor"))
    p.add_argument("--model", choices=("dnn", "lstm"), default="lstm")
    p.add_argument("--profile", default="TDL-A")
    p.add_argument("--doppler", type=float, default=10.0)
    p.add_argument("--d", type=int, default=None, help="hidden size")

    p = common(sub.add_parser("eval", help="evaluate a saved model"))
    p.add_argument("--model-file", required=True)
    p.add_argument("--profile", default="TDL-A")
    p.add_argument("--doppler", type=float, default=10.0)

    p = common(sub.add_parser("sweep-nmse",
                              help="NMSE vs Doppler sweep"))
    p.add_argument("--d", type=int, default=None)

    p = common(sub.add_parser("sweep-complexity",
                              help="NMSE/FLOPs vs hidden size"))
    p.add_argument("--d-list", default="2,4,8,16,32")
    p.add_argument("--profile", default="TDL-A")
    p.add_argument("--doppler", type=float, default=10.0)

    p = common(sub.add_parser("throughput", help="slot-level throughput"))
    p.add_argument("--policy", choices=harness.POLICIES, default="lstm")
    p.add_argument("--profile", default="TDL-A")
    p.add_argument("--doppler", type=float, default=10.0)
    p.add_argument("--slots", type=int, default=200000)
    p.add_argument("--model-file", default=None,
                   help="saved model for dnn/lstm policies "
                        "(trained on the fly when omitted)")
    return parser


def _out_dir(args) -> str:
    return os.environ.get(OUT_DIR_ENV) or args.out or "out"


def _load_config(args) -> harness.ExperimentConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return harness.parse_config(args.config, overrides)


def _write_sidecar(path, cfg, args, extra=None):
    meta = {
        "config_hash": cfg.config_hash(),
        "overrides": list(args.overrides),
        "verb": args.verb,
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def _tag(profile: str, doppler: float) -> str:
    return f"{profile}_{doppler:g}hz".replace("-", "").lower()


def _print_record(rec):
    parts = [f"{rec.profile}", f"fD={rec.doppler_hz:g}Hz",
             f"model={rec.model}", f"D={rec.d}"]
    if rec.nmse_db == rec.nmse_db:
        parts.append(f"nmse={rec.nmse_db:.3f}dB")
    if rec.throughput_mbps == rec.throughput_mbps:
        parts.append(f"tput={rec.throughput_mbps:.3f}Mbps")
    print("  ".join(parts))


def _cmd_gen(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    dataset = harness.generate_dataset(cfg, args.profile, args.doppler)
    tag = _tag(args.profile, args.doppler)
    for split in ("train", "val", "test"):
        path = os.path.join(out, f"windows_{tag}_{split}.wsmp")
        windows.save_windows(getattr(dataset, split), path)
        print(f"{split}: {len(getattr(dataset, split))} samples -> {path}")
    _write_sidecar(os.path.join(out, f"windows_{tag}.meta.json"), cfg, args,
                   extra={"provenance": {k: v for k, v in
                                         dataset.provenance.items()
                                         if k != "seeds"}})
    return EXIT_OK


def _train_model(cfg, kind, profile, doppler, d):
    dataset = harness.generate_dataset(cfg, profile, doppler)
    report = harness.train_predictor(cfg, kind, dataset, d=d)
    return dataset, report


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    dataset, report = _train_model(cfg, args.model, args.profile,
                                   args.doppler, args.d)
    tag = _tag(args.profile, args.doppler)
    path = os.path.join(out, f"model_{args.model}_{tag}.csip")
    nn.save_model(report.model, path, metadata={
        "config_hash": cfg.config_hash(),
        "overrides": list(args.overrides),
        "dataset_hash": nn.dataset_hash(dataset.as_arrays()),
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
        "final_val_loss_db2": report.val_loss[-1],
    })
    print(f"model -> {path}  final val MSE {report.val_loss[-1]:.4f} dB^2")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args)
    model = nn.load_model(args.model_file)
    expected = cfg.history_p + 1
    if model.input_dim != expected or model.output_dim != cfg.t_csi - 1:
        raise RuntimeError(
            f"model dims (P+1={model.input_dim}, T={model.output_dim}) do "
            f"not match config (P+1={expected}, T={cfg.t_csi - 1})")
    dataset = harness.generate_dataset(cfg, args.profile, args.doppler)
    x_test, y_test = dataset.test_arrays()
    nmse = harness.evaluate_nmse(model, x_test, y_test)
    hold = harness.hold_nmse(x_test, y_test)
    print(f"{args.profile}  fD={args.doppler:g}Hz  model={model.kind}  "
          f"nmse={nmse:.3f}dB  hold={hold:.3f}dB")
    return EXIT_OK


def _cmd_sweep_nmse(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    records = harness.run_nmse_sweep(cfg, d=args.d, jobs=args.jobs,
                                     progress=_print_record)
    csv_path, _ = harness.emit_report(records, out, stem="sweep_nmse")
    _write_sidecar(csv_path + ".meta.json", cfg, args)
    print(f"report -> {csv_path}")
    return EXIT_OK


def _cmd_sweep_complexity(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    d_list = tuple(int(v) for v in args.d_list.split(",") if v.strip())
    records = harness.run_complexity_sweep(cfg, d_list=d_list,
                                           profile=args.profile,
                                           doppler_hz=args.doppler,
                                           progress=_print_record)
    csv_path, _ = harness.emit_report(records, out, stem="sweep_complexity")
    _write_sidecar(csv_path + ".meta.json", cfg, args)
    print(f"report -> {csv_path}")
    return EXIT_OK


def _cmd_throughput(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    model = None
    if args.policy in ("dnn", "lstm"):
        if args.model_file:
            model = nn.load_model(args.model_file)
        else:
            _, report = _train_model(cfg, args.policy, args.profile,
                                     args.doppler, None)
            model = report.model
    tput = harness.run_throughput_sim(cfg, args.policy, args.doppler,
                                      args.slots, model=model,
                                      profile=args.profile)
    baseline = harness.run_throughput_sim(cfg, "stale", args.doppler,
                                          args.slots, profile=args.profile)
    rec = harness.SweepRecord(
        profile=args.profile, doppler_hz=args.doppler, model=args.policy,
        d=model.hidden_dim if model else 0, p=cfg.history_p, t_csi=cfg.t_csi,
        nmse_db=float("nan"),
        flops=nn.count_flops(model.kind, model.input_dim, model.hidden_dim,
                             model.output_dim) if model else 0,
        throughput_mbps=tput, baseline_mbps=baseline, seed=cfg.seed)
    _print_record(rec)
    csv_path, _ = harness.emit_report(
        [rec], out, stem=f"throughput_{args.policy}_{_tag(args.profile, args.doppler)}")
    _write_sidecar(csv_path + ".meta.json", cfg, args)
    print(f"report -> {csv_path}")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep-nmse": _cmd_sweep_nmse,
    "sweep-complexity": _cmd_sweep_complexity,
    "throughput": _cmd_throughput,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cmd = _COMMANDS[args.verb]
    except KeyError:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return cmd(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
