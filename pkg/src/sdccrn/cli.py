"""Command-line entry point: train, enhance, evaluate, scan, inspect.

Every subcommand exits 0 on success. On failure it prints a single line
``error: <kind>: <message>`` to stderr and exits 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np
import torch


def _cmd_train(args) -> dict:
    from .train import RunConfig, train

    cfg = RunConfig.from_json(args.config)
    if args.resume:
        cfg.resume = True
    return train(cfg)


def enhance_wave(model, wave: np.ndarray, streaming: bool = False) -> tuple[np.ndarray, float]:
    """Enhance a mono signal; returns (output of equal length, real-time factor).

    The input is zero-padded to a whole number of hops (and at least one
    window) so the tail is covered by a frame; both modes see the same frames.
    """
    from .streaming import StreamingEnhancer

    x = torch.from_numpy(np.asarray(wave, dtype=np.float32))
    n = len(x)
    hop, win = model.cfg.hop, model.cfg.win_len
    padded = max(-(-n // hop) * hop, win)
    x = torch.nn.functional.pad(x, (0, padded - n))
    t0 = time.perf_counter()
    if streaming:
        y = StreamingEnhancer(model).process(x)
    else:
        with torch.no_grad():
            y = model(x)
    xrt = (time.perf_counter() - t0) / (n / model.cfg.sample_rate)
    return y[:n].numpy(), xrt


def _cmd_enhance(args) -> dict:
    from .checkpoint import load_model
    from .data import load_wav, save_wav

    model = load_model(args.ckpt)
    wave = load_wav(args.inp, model.cfg.sample_rate)
    out, xrt = enhance_wave(model, wave, args.streaming)
    save_wav(args.out, out, model.cfg.sample_rate)
    return {"out": args.out, "samples": len(out), "mode": "streaming" if args.streaming else "offline", "xrt": xrt}


def _cmd_evaluate(args) -> dict:
    from .checkpoint import load_model
    from .evaluate import evaluate_pairs, read_pairs

    model = load_model(args.ckpt)
    rows = evaluate_pairs(lambda w: enhance_wave(model, w)[0], read_pairs(args.pairs), args.out, model.cfg)
    mean = rows[-1]
    failed = sum(1 for r in rows[:-1] if r["error"])
    return {"out": args.out, "pairs": len(rows) - 1, "failed": failed,
            "si_snri_db": mean["si_snri_db"], "lsd_db": mean["lsd_db"]}


def _cmd_scan(args) -> dict:
    from .data import scan_directory, write_manifest

    entries = scan_directory(args.dir, args.kind)
    write_manifest(entries, args.out)
    return {"out": args.out, "speech": sum(e.kind == "speech" for e in entries),
            "noise": sum(e.kind == "noise" for e in entries)}


def alpha_curve(model) -> list[tuple[float, float]]:
    """(centre frequency in Hz, alpha) per model bin; bin 0 is reported at DC."""
    cfg = model.cfg
    n = cfg.n_freq
    if model.lsc is None:
        alpha = torch.ones(n)
    else:
        alpha = model.lsc.alpha.detach().reshape(-1).expand(n)
    return [(k * cfg.sample_rate / cfg.fft_size, float(a)) for k, a in enumerate(alpha)]


def _cmd_inspect(args) -> None:
    from .checkpoint import load_model
    from .model import parameter_breakdown, parameter_count

    model = load_model(args.ckpt)
    print(f"parameters,{parameter_count(model)}")
    for name, count in parameter_breakdown(model).items():
        print(f"module.{name},{count}")
    lines = ["freq_hz,alpha"] + [f"{f:.1f},{a:.6f}" for f, a in alpha_curve(model)]
    if args.alpha_csv:
        with open(args.alpha_csv, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdccrn")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="train from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true", help="continue from <checkpoint_dir>/last")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("enhance", help="enhance one WAV file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--streaming", action="store_true")
    p.set_defaults(fn=_cmd_enhance)

    p = sub.add_parser("evaluate", help="score paired noisy/clean files")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("scan", help="index WAV files into a manifest")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["speech", "noise"], default=None)
    p.set_defaults(fn=_cmd_scan)

    p = sub.add_parser("inspect", help="parameter counts and the learned compression curve")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--alpha-csv", default=None, help="write the alpha curve here instead of stdout")
    p.set_defaults(fn=_cmd_inspect)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        result = args.fn(args)
    except Exception as exc:  # noqa: BLE001 - converted to a one-line report
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    if result is not None:
        print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
