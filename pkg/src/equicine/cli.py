"""Command-line interface.

Subcommands::

    gen-data             write a DSRE1 dataset from a run config
    train                train a model, write a DSRM1 checkpoint and a loss CSV
    reconstruct          write reconstructions of a dataset split as DSRE1
    eval                 write a metrics CSV (sample_id, R, variant, psnr_db, ssim, hfen)
    verify-equivariance  run the invariant checks and print PASS/FAIL lines
    export               write a 16-bit PGM slice plus a bounds sidecar

Exit codes: 0 success, 1 validation failure (bad input, failed check),
2 runtime failure. Relative output paths are placed under
``$EQUICINE_OUT_DIR`` when that variable is set.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, serialize_config, sub_seed
from .export import MODES, export_image, image_slice
from .phantom import DatasetFormatError, Sample, make_sample, read_dataset, write_dataset
from .train import MetricsReport, evaluate, reconstruct, score_pair, train
from .unroll import VARIANTS, build_model, load_checkpoint, save_checkpoint
from .verify import run_suite

__all__ = ["main", "build_parser"]

OUT_ENV = "EQUICINE_OUT_DIR"
SPLITS = ("train", "val", "test")


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _out(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(OUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _model_config(cfg: RunConfig, variant: str | None):
    name = variant or cfg.variant
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    return name, replace(cfg.model, **VARIANTS[name])


def _split(samples, meta, name):
    if name == "all":
        return samples
    splits = meta.get("splits")
    if not splits:
        return samples
    if name not in splits:
        raise ValidationError(f"dataset has no split {name!r}")
    return [samples[i] for i in splits[name]]


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    d = cfg.data
    samples, splits = [], {}
    for split, n in zip(SPLITS, (d.n_train, d.n_val, d.n_test)):
        splits[split] = list(range(len(samples), len(samples) + n))
        for i in range(n):
            seed = sub_seed(cfg.seed, f"data/{split}/{i}")
            samples.append(make_sample(seed, d.T, d.H, d.W, d.n_coils, d.R))
    meta = {"splits": splits, "R": d.R, "config": serialize_config(cfg)}
    out = _out(args.out)
    write_dataset(out, samples, meta)
    print(f"wrote {len(samples)} samples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    samples, meta = read_dataset(args.data)
    name, mcfg = _model_config(cfg, args.variant)
    tcfg = cfg.train if args.epochs is None else replace(cfg.train, epochs=args.epochs)
    tcfg = replace(tcfg, seed=sub_seed(cfg.seed, "train"), noise_sigma=cfg.data.noise_sigma)
    model = build_model(mcfg, seed=sub_seed(cfg.seed, "init"))
    print(f"variant {name}: {model.n_params} learnable parameters")
    loss_path = _out(args.loss_csv or (str(args.out) + ".loss.csv"))
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,lr,loss,seconds\n")

        def log(rec):
            fh.write(f"{rec['epoch']},{rec['lr']!r},{rec['loss']!r},{rec['seconds']:.3f}\n")
            fh.flush()
            if not args.quiet:
                print(f"epoch {rec['epoch']:3d}  lr {rec['lr']:.3e}  loss {rec['loss']:.6f}")

        train(model, _split(samples, meta, args.split), tcfg, log=log)
    out = _out(args.out)
    save_checkpoint(out, model)
    print(f"wrote checkpoint {out} and loss curve {loss_path}")
    return 0


def _load_model(path):
    return load_checkpoint(path) if path else None


def cmd_reconstruct(args) -> int:
    samples, meta = read_dataset(args.data)
    model = _load_model(args.model)
    subset = _split(samples, meta, args.split)
    R = args.R if args.R is not None else meta.get("R", 8.0)
    out_samples = []
    for s in subset:
        rec, zf = reconstruct(model, s, R)
        out_samples.append(Sample(rec, s.sens, s.mask, s.seed))
    out = _out(args.out)
    write_dataset(out, out_samples, {"R": R, "source": str(args.data), "split": args.split,
                                     "model": str(args.model) if args.model else "zero-filled"})
    print(f"wrote {len(out_samples)} reconstructions to {out}")
    return 0


def cmd_eval(args) -> int:
    samples, meta = read_dataset(args.data)
    subset = _split(samples, meta, args.split)
    if args.recon:
        recs, rmeta = read_dataset(args.recon)
        if len(recs) != len(subset):
            raise ValidationError(f"{args.recon}: {len(recs)} reconstructions for {len(subset)} samples")
        R = float(rmeta.get("R"))
        zf_rows = evaluate(None, subset, [R]).rows
        report = MetricsReport()
        for sid, (r, s) in enumerate(zip(recs, subset)):
            report.rows.append(zf_rows[sid])
            report.rows.append({"sample_id": sid, "R": R, "variant": args.variant, **score_pair(r.image, s.image)})
    else:
        model = _load_model(args.model)
        R_list = args.R or [meta.get("R", 8.0)]
        report = evaluate(model, subset, R_list, variant=args.variant, jobs=args.jobs)
    out = _out(args.out)
    out.write_text("\n".join(report.csv_lines()) + "\n", encoding="utf-8")
    for entry in report.summary():
        print(f"R={entry['R']:g} {entry['variant']:>12s}: PSNR {entry['psnr_db_mean']:.2f}±{entry['psnr_db_std']:.2f} dB  "
              f"SSIM {entry['ssim_mean']:.4f}  HFEN {entry['hfen_mean']:.4f}  (n={entry['n']})")
    return 0


def cmd_verify(args) -> int:
    checks = run_suite(args.variant, seed=args.seed, K=args.K)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} properties hold for variant {args.variant}")
    return 1 if failed else 0


def cmd_export(args) -> int:
    samples, _ = read_dataset(args.data)
    if not 0 <= args.sample < len(samples):
        raise ValidationError(f"{args.data}: sample {args.sample} out of range (0..{len(samples) - 1})")
    ref = None
    if args.mode == "error-map":
        if not args.ref:
            raise ValidationError("export --mode error-map needs --ref")
        refs, _ = read_dataset(args.ref)
        # reconstructions keep their sample seed, so match on it
        by_seed = {r.seed: r for r in refs}
        seed = samples[args.sample].seed
        if seed not in by_seed:
            raise ValidationError(f"{args.ref}: no sample with seed {seed}")
        ref = by_seed[seed].image
    sl = image_slice(samples[args.sample].image, args.mode, frame=args.frame, column=args.column, ref=ref)
    out = _out(args.out)
    lo, hi = export_image(sl, out, args.mode)
    print(f"wrote {out} ({sl.shape[0]}x{sl.shape[1]}, bounds {lo:.6g}..{hi:.6g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="equicine", description="Rotation-equivariant unrolled reconstruction for dynamic MRI.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic phantom dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--loss-csv")
    t.add_argument("--variant", choices=sorted(VARIANTS))
    t.add_argument("--epochs", type=int)
    t.add_argument("--split", default="train", choices=SPLITS + ("all",))
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reconstruct", help="reconstruct a dataset split")
    r.add_argument("--data", required=True)
    r.add_argument("--model")
    r.add_argument("--R", type=float)
    r.add_argument("--split", default="test", choices=SPLITS + ("all",))
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("eval", help="score reconstructions")
    e.add_argument("--data", required=True)
    src = e.add_mutually_exclusive_group()
    src.add_argument("--model")
    src.add_argument("--recon")
    e.add_argument("--R", type=float, nargs="+")
    e.add_argument("--split", default="test", choices=SPLITS + ("all",))
    e.add_argument("--variant", default="model")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify-equivariance", help="run the invariant suite")
    v.add_argument("--variant", default="srec", choices=sorted(VARIANTS))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--K", type=int, default=5)
    v.set_defaults(func=cmd_verify)

    x = sub.add_parser("export", help="export a slice as 16-bit PGM")
    x.add_argument("--data", required=True)
    x.add_argument("--sample", type=int, default=0)
    x.add_argument("--frame", type=int, default=0)
    x.add_argument("--column", type=int)
    x.add_argument("--mode", default="magnitude", choices=MODES)
    x.add_argument("--ref")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValidationError, ConfigError, DatasetFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
