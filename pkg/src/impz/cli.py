"""Batch command-line surface: synth, train, invert, evaluate,
gradcheck, export-wavelet.

Every command writes a run manifest (config snapshot, seed, git
describe, input hashes, output paths) so identical reruns are
verifiable. Exit codes: 0 success, 1 numeric failure, 2 usage or I/O.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import data as dat
from . import metrics as met
from .forward_model import (
    ForwardModelConfig,
    extract_wavelet,
    synthesize,
    wavelet_peak_frequency,
)
from .gradcheck import run_default_suite
from .inverse_model import InverseModelConfig, invert_survey
from .params import CheckpointFormatError, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainingDivergedError, train_loop

THREADS_ENV = "IMPZ_THREADS"


def worker_count(requested: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap:
        return max(1, min(requested, int(cap)))
    return max(1, requested)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, args: argparse.Namespace,
                   inputs: list, outputs: list) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": command,
        "config": {k: str(v) if isinstance(v, Path) else v for k, v in config.items()},
        "seed": getattr(args, "seed", None),
        "git_describe": _git_describe(),
        "input_hashes": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    with open(path, "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.samples % args.ratio != 0:
        raise ValueError(f"--samples {args.samples} not divisible by --ratio {args.ratio}")
    imp = dat.make_layered_model(args.traces, args.samples, args.layers,
                                 seed=args.seed, dt_ms=args.dt_ms,
                                 with_fault=not args.no_fault)
    snr = None if args.snr_db is None or args.snr_db >= 1e9 else args.snr_db
    pair = dat.synthesize_survey(imp, f_peak_hz=args.fpeak, noise_snr_db=snr,
                                 resolution_ratio=args.ratio, seed=args.seed)
    imp_path = f"{args.out_prefix}_impedance.surv"
    seis_path = f"{args.out_prefix}_seismic.surv"
    dat.save_survey(imp_path, pair.impedance)
    dat.save_survey(seis_path, pair.seismic)
    write_manifest(f"{args.out_prefix}.manifest.json", "synth", args,
                   inputs=[], outputs=[imp_path, seis_path])
    print(f"wrote {imp_path} ({imp.n_traces}x{imp.n_samples}) and "
          f"{seis_path} ({pair.seismic.n_traces}x{pair.seismic.n_samples})")
    return 0


def _load_pair(seismic_path, impedance_path) -> dat.SurveyPair:
    seis = dat.load_survey(seismic_path)
    imp = dat.load_survey(impedance_path)
    if seis.kind != "seismic" or imp.kind != "impedance":
        raise ValueError("survey kinds do not match the expected seismic/impedance pair")
    if imp.n_samples % seis.n_samples != 0:
        raise ValueError("impedance samples not a multiple of seismic samples")
    return dat.SurveyPair(seismic=seis, impedance=imp,
                          resolution_ratio=imp.n_samples // seis.n_samples)


def _parse_dilations(text: str) -> tuple:
    return tuple(int(p) for p in text.split(",") if p.strip())


def cmd_train(args) -> int:
    pair = _load_pair(args.seismic, args.impedance)
    split = dat.pick_labeled_traces(pair.seismic.n_traces, args.labeled)
    dataset = dat.normalize(pair, split)

    inv_cfg = InverseModelConfig(
        gru_hidden=args.gru_hidden,
        lpa_channels=args.lpa_channels,
        dilation_set=_parse_dilations(args.dilations),
        upsample_factor=pair.resolution_ratio,
        regression_hidden=args.regression_hidden,
    )
    fwd_cfg = ForwardModelConfig(
        feat_channels=args.feat_channels,
        feat_kernel=args.feat_kernel,
        wavelet_kernel_length=args.wavelet_length,
        downsample_stride=pair.resolution_ratio,
    )
    if args.regime == "unsupervised" and args.alpha > 0:
        print(f"warning: regime=unsupervised forces alpha=0 (requested {args.alpha})")
    if args.regime == "supervised" and args.beta > 0:
        print(f"warning: regime=supervised forces beta=0 (requested {args.beta})")
    cfg = TrainConfig(
        labeled_indices=split.labeled.tolist(),
        alpha=args.alpha, beta=args.beta,
        batch_unlabeled=args.batch_unlabeled,
        epochs=args.epochs, lr=args.lr, seed=args.seed,
        regime=args.regime, eval_every=args.eval_every,
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loss_log = out_dir / "loss_log.csv"
    ckpt = out_dir / "checkpoint.impz"

    result = train_loop(dataset, split, cfg, inv_cfg, fwd_cfg,
                        loss_log_path=loss_log, verbose=not args.quiet)
    extra = {
        "inverse_config": {
            "gru_hidden": inv_cfg.gru_hidden,
            "lpa_channels": inv_cfg.lpa_channels,
            "dilation_set": list(inv_cfg.dilation_set),
            "upsample_factor": inv_cfg.upsample_factor,
            "regression_hidden": inv_cfg.regression_hidden,
        },
        "forward_config": {
            "feat_channels": fwd_cfg.feat_channels,
            "feat_kernel": fwd_cfg.feat_kernel,
            "wavelet_kernel_length": fwd_cfg.wavelet_kernel_length,
            "downsample_stride": fwd_cfg.downsample_stride,
        },
        "norm_stats": dataset.stats.to_dict(),
        "labeled_indices": split.labeled.tolist(),
        "resolution_ratio": pair.resolution_ratio,
        "regime": cfg.regime,
        "impedance_dt_ms": pair.impedance.dt_ms,
        "best_val_pcc": result.best_val_pcc,
        "best_epoch": result.best_epoch,
    }
    save_checkpoint(ckpt, result.store, extra=extra)
    write_manifest(out_dir / "manifest.json", "train", args,
                   inputs=[args.seismic, args.impedance],
                   outputs=[ckpt, loss_log])
    print(f"best validation PCC {result.best_val_pcc:.6f} at epoch "
          f"{result.best_epoch + 1}; checkpoint {ckpt}")
    return 0


def _configs_from_extra(extra: dict) -> tuple[InverseModelConfig, ForwardModelConfig]:
    ic = extra["inverse_config"]
    fc = extra["forward_config"]
    inv_cfg = InverseModelConfig(
        gru_hidden=ic["gru_hidden"], lpa_channels=ic["lpa_channels"],
        dilation_set=tuple(ic["dilation_set"]),
        upsample_factor=ic["upsample_factor"],
        regression_hidden=ic["regression_hidden"],
    )
    fwd_cfg = ForwardModelConfig(
        feat_channels=fc["feat_channels"], feat_kernel=fc["feat_kernel"],
        wavelet_kernel_length=fc["wavelet_kernel_length"],
        downsample_stride=fc["downsample_stride"],
    )
    return inv_cfg, fwd_cfg


def cmd_invert(args) -> int:
    store, extra = load_checkpoint(args.checkpoint)
    inv_cfg, _ = _configs_from_extra(extra)
    stats = dat.NormStats.from_dict(extra["norm_stats"])
    seis = dat.load_survey(args.seismic)
    if seis.kind != "seismic":
        raise ValueError(f"expected a seismic survey, got kind {seis.kind!r}")
    workers = worker_count(args.threads)
    est_norm = invert_survey(stats.normalize_seismic(seis.values), inv_cfg, store,
                             workers=workers)
    est = stats.denormalize_ai(est_norm)
    # estimates are floored at 1.0 so the written survey stays physically valid
    out_ts = dat.TraceSet(kind="impedance", values=np.maximum(est, 1.0),
                          dt_ms=seis.dt_ms / inv_cfg.upsample_factor, dx_m=seis.dx_m)
    dat.save_survey(args.out, out_ts)
    write_manifest(f"{args.out}.manifest.json", "invert", args,
                   inputs=[args.checkpoint, args.seismic], outputs=[args.out])
    print(f"wrote {args.out} ({out_ts.n_traces}x{out_ts.n_samples})")
    return 0


def cmd_evaluate(args) -> int:
    store, extra = load_checkpoint(args.checkpoint)
    inv_cfg, _ = _configs_from_extra(extra)
    stats = dat.NormStats.from_dict(extra["norm_stats"])
    pair = _load_pair(args.seismic, args.impedance)
    if args.labeled is not None:
        split = dat.pick_labeled_traces(pair.seismic.n_traces, args.labeled)
    else:
        labeled = np.asarray(extra["labeled_indices"], dtype=int)
        mask = np.ones(pair.seismic.n_traces, dtype=bool)
        mask[labeled] = False
        split = dat.Split(labeled=labeled, unlabeled=np.flatnonzero(mask))
    workers = worker_count(args.threads)
    train_rep, val_rep = met.evaluate(pair, split, store, inv_cfg, stats,
                                      workers=workers, per_trace=args.per_trace)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["split", "pcc", "r2", "n_traces", "sigma_ai"])
        for rep in (train_rep, val_rep):
            writer.writerow([rep.split, repr(rep.pcc), repr(rep.r2),
                             rep.n_traces, repr(rep.sigma_ai)])
    outputs = [args.out]
    if args.scatter:
        est = stats.denormalize_ai(
            invert_survey(stats.normalize_seismic(pair.seismic.values),
                          inv_cfg, store, workers=workers))
        met.export_scatter(pair.impedance.values[split.unlabeled],
                           est[split.unlabeled], args.scatter)
        outputs.append(args.scatter)
    write_manifest(f"{args.out}.manifest.json", "evaluate", args,
                   inputs=[args.checkpoint, args.seismic, args.impedance],
                   outputs=outputs)
    for rep in (train_rep, val_rep):
        print(f"{rep.split}: pcc={rep.pcc:.6f} r2={rep.r2:.6f} "
              f"n={rep.n_traces} sigma_ai={rep.sigma_ai:.1f}")
    return 0


def cmd_gradcheck(args) -> int:
    ok = run_default_suite(verbose=not args.quiet, seed=args.seed)
    write_manifest(args.manifest, "gradcheck", args, inputs=[], outputs=[])
    print("gradcheck: PASS" if ok else "gradcheck: FAIL")
    return 0 if ok else 1


def cmd_export_wavelet(args) -> int:
    store, extra = load_checkpoint(args.checkpoint)
    _, fwd_cfg = _configs_from_extra(extra)
    w = extract_wavelet(store, fwd_cfg)
    dt_ms = float(extra.get("impedance_dt_ms", 1.0))
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample_index", "amplitude"])
        for i, a in enumerate(w):
            writer.writerow([i, repr(float(a))])
    write_manifest(f"{args.out}.manifest.json", "export-wavelet", args,
                   inputs=[args.checkpoint], outputs=[args.out])
    print(f"wrote {args.out} ({len(w)} samples, peak "
          f"{wavelet_peak_frequency(w, dt_ms):.1f} Hz at {dt_ms} ms sampling)")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impz",
        description="Semi-supervised seismic-to-impedance inversion toolkit",
    )
    parser.add_argument("--config", help="JSON file of flag defaults; explicit flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic survey pair")
    p.add_argument("--traces", type=int, default=200)
    p.add_argument("--samples", type=int, default=512, help="impedance samples per trace")
    p.add_argument("--layers", type=int, default=12)
    p.add_argument("--ratio", type=int, default=2, help="impedance samples per seismic sample")
    p.add_argument("--fpeak", type=float, default=30.0, help="Ricker peak frequency, Hz")
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--dt-ms", type=float, default=1.0, help="impedance sampling interval")
    p.add_argument("--no-fault", action="store_true")
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the inversion and synthesis models")
    p.add_argument("--seismic", required=True)
    p.add_argument("--impedance", required=True)
    p.add_argument("--labeled", type=int, default=20)
    p.add_argument("--regime", choices=["semi", "supervised", "unsupervised"], default="semi")
    p.add_argument("--alpha", type=float, default=0.2, help="property loss weight")
    p.add_argument("--beta", type=float, default=1.0, help="seismic loss weight")
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--batch-unlabeled", type=int, default=16)
    p.add_argument("--eval-every", type=int, default=5)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--gru-hidden", type=int, default=8)
    p.add_argument("--lpa-channels", type=int, default=8)
    p.add_argument("--dilations", default="1,3,6")
    p.add_argument("--regression-hidden", type=int, default=8)
    p.add_argument("--feat-channels", type=int, default=8)
    p.add_argument("--feat-kernel", type=int, default=5)
    p.add_argument("--wavelet-length", type=int, default=51)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("invert", help="invert a seismic survey with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seismic", required=True)
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("evaluate", help="score estimated impedance per split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seismic", required=True)
    p.add_argument("--impedance", required=True)
    p.add_argument("--labeled", type=int, default=None,
                   help="override the labeled count stored in the checkpoint")
    p.add_argument("--per-trace", action="store_true")
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--scatter", default=None, help="also write a scatter CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--manifest", default="gradcheck.manifest.json")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-wavelet", help="dump the learned wavelet kernel as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_wavelet)

    parser.subcommands = dict(sub.choices)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if "--config" in argv:
        at = argv.index("--config")
        try:
            with open(argv[at + 1]) as f:
                defaults = json.load(f)
        except (OSError, json.JSONDecodeError, IndexError) as e:
            print(f"error: cannot read --config: {e}", file=sys.stderr)
            return 2
        for p in parser.subcommands.values():
            known = {a.dest for a in p._actions}
            p.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TrainingDivergedError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 1
    except (dat.SurveyFormatError, CheckpointFormatError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
