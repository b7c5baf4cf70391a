"""Command-line interface: training, evaluation curves and fixed-point checks.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import fixedpoint, montecarlo as mc
from .grid import GridConfig, build_grid
from .trainer import NumericFailure, TrainConfig, save_trained, train, write_loss_trace
from .unitary import HouseholderParams, load_model

log = logging.getLogger("dbuofdm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def csv_header(command: str, cfg: dict, seed: int) -> str:
    return f"# command={command} config_sha256={config_hash(cfg)} seed={seed}"


def _parse_snr(text: str) -> list[float]:
    """'0,5,10' or 'start:stop:step' (stop inclusive)."""
    try:
        if ":" in text:
            a, b, s = (float(t) for t in text.split(":"))
            return list(np.round(np.arange(a, b + s / 2, s), 10))
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None


# train -----------------------------------------------------------------------------------

def cmd_train(args) -> int:
    raw = _read_json(args.config)
    fields = dict(raw.get("train", {}))
    fields["grid"] = raw["grid"] if "grid" in raw else {k: v for k, v in raw.items() if k != "train"}
    fields["task"] = args.task
    for name in ("seed", "steps"):
        if getattr(args, name) is not None:
            fields[name] = getattr(args, name)
    try:
        cfg = TrainConfig.from_dict(fields)
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(str(e)) from None
    out = Path(args.out)
    trace = Path(args.trace) if args.trace else out.with_suffix(".loss.csv")

    def progress(step, loss):
        if args.verbose and step % 50 == 0:
            print(f"step {step} loss {loss:.6g}", file=sys.stderr)

    result = train(cfg, progress=progress)
    save_trained(result, cfg, out)
    write_loss_trace(result.losses, trace, csv_header("train", cfg.to_dict(), cfg.seed))
    if result.aborted:
        print(f"training diverged after {len(result.losses)} steps; last good model saved",
              file=sys.stderr)
        return EXIT_NUMERIC
    print(f"model: {out}\nloss trace: {trace}")
    return EXIT_OK


# eval --------------------------------------------------------------------------------------

def _grid_config(args) -> GridConfig:
    raw = _read_json(args.config)
    try:
        return GridConfig.from_dict(raw["grid"] if "grid" in raw else
                                    {k: v for k, v in raw.items() if k not in ("train", "eval")})
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"bad grid config: {e}") from None


def _scheme(args, grid):
    if args.model and args.baseline:
        raise ConfigError("give either --model or --baseline, not both")
    params = None
    if args.model:
        if not Path(args.model).exists():
            raise ConfigError(f"model file not found: {args.model}")
        try:
            params = load_model(args.model)
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"bad model file: {e}") from None
        if args.blocks is not None and params.n_blocks != args.blocks:
            raise ConfigError(f"model has {params.n_blocks} blocks, --blocks asked for {args.blocks}")
    elif args.blocks is not None:
        rng = np.random.default_rng([args.seed, 0xB10C])
        params = HouseholderParams.random(grid.n_data, args.k_factors, args.blocks, rng)
    elif args.baseline is None:
        raise ConfigError("one of --model, --baseline or --blocks is required")
    try:
        return mc.make_scheme(grid, args.baseline, params)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _eval_cfg(args, grid_cfg, extra) -> dict:
    d = {"grid": grid_cfg.to_dict(), "model": args.model, "baseline": args.baseline,
         "blocks": args.blocks, "modulation": args.modulation}
    d.update(extra)
    return d


def cmd_eval_papr(args) -> int:
    gc = _grid_config(args)
    grid = build_grid(gc)
    scheme = _scheme(args, grid)
    mod = args.modulation or "16qam"
    res = mc.run_papr_ccdf(scheme, args.trials, args.oversample, mod, args.seed, args.jobs)
    hdr = csv_header("eval-papr", _eval_cfg(args, gc, {"trials": args.trials,
                                                         "oversample": args.oversample}), args.seed)
    mc.papr_csv(res, args.csv, hdr)
    print(f"{scheme.name}: PAPR at CCDF 1e-2 = {res.papr_at(1e-2):.2f} dB")
    return EXIT_OK


def _cmd_link(args, metric: str) -> int:
    gc = _grid_config(args)
    grid = build_grid(gc)
    scheme = _scheme(args, grid)
    mod = args.modulation or "qpsk"
    pts = mc.run_ber_bler(scheme, args.snr, mod, args.min_errors, args.min_blocks, args.max_blocks,
                          args.seed, args.jobs, csi=args.csi)
    extra = {"snr": args.snr, "min_errors": args.min_errors, "min_blocks": args.min_blocks,
             "max_blocks": args.max_blocks, "csi": args.csi}
    mc.write_link_csv(pts, args.csv, metric, csv_header(f"eval-{metric}", _eval_cfg(args, gc, extra),
                                                        args.seed))
    for p in pts:
        print(f"{p.snr_db:g} dB: BER {p.ber:.3e}  BLER {p.bler:.3e}  ({p.trials} blocks)")
    return EXIT_OK


def cmd_eval_sense(args) -> int:
    gc = _grid_config(args)
    grid = build_grid(gc)
    scheme = _scheme(args, grid)
    mod = args.modulation or "qpsk"
    pts = mc.run_sensing(scheme, args.snr, args.trials, args.paths, mod, args.seed, args.jobs,
                         hard=not args.soft)
    hdr = csv_header("eval-sense", _eval_cfg(args, gc, {"snr": args.snr, "trials": args.trials,
                                                          "paths": args.paths, "soft": args.soft}),
                     args.seed)
    mc.write_sense_csv(pts, args.csv, hdr)
    if args.per_path_csv:
        mc.write_sense_paths_csv(pts, args.per_path_csv, hdr)
    for p in pts:
        print(f"{p.snr_db:g} dB: range MSE {p.range_mse:.4g} m^2  velocity MSE {p.vel_mse:.4g} (m/s)^2")
    return EXIT_OK


# fixed point ------------------------------------------------------------------------------

def fixedpoint_report(params: HouseholderParams, trials: int, seed: int) -> dict:
    rng = np.random.default_rng([seed, 0xF1])
    casc = fixedpoint.FixedCascade(params)
    fwd = fixedpoint.characterize_error(params, trials, rng, mode="forward")
    x = fixedpoint.random_unit_vectors(rng, (trials, params.n_data))
    rt = np.abs(casc.apply(casc.apply(x, "forward"), "adjoint") - x).max()
    merged_res = 0.0
    for u, lo, hi in zip(casc.u, casc.offsets[:-1], casc.offsets[1:]):
        xb = x[:, lo:hi]
        for u1, u2 in zip(*fixedpoint._pairs(u)):
            d = fixedpoint.merged_householder(xb, u1, u2) - fixedpoint.sequential_householder(xb, u1, u2)
            merged_res = max(merged_res, float(np.abs(d).max()))
    return {"trials": trials, "k_factors": params.k_factors, "max_abs_error": fwd["max_abs"],
            "mean_abs_error": fwd["mean_abs"], "roundtrip_max_abs_error": float(rt),
            "merged_vs_sequential": merged_res}


def cmd_fixedpoint(args) -> int:
    if not Path(args.model).exists():
        raise ConfigError(f"model file not found: {args.model}")
    try:
        params = load_model(args.model)
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"bad model file: {e}") from None
    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    rep = fixedpoint_report(params, args.trials, args.seed)
    if params.k_factors % 2:
        print("note: odd K, last merged module padded with an identity reflection")
    for k, v in rep.items():
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    if args.dump:
        Path(args.dump).write_text(json.dumps(fixedpoint.FixedCascade(params).to_dict()) + "\n")
    return EXIT_OK


# parser ------------------------------------------------------------------------------------

def _add_eval_common(p, default_trials=None):
    p.add_argument("--model", help="trained model JSON")
    p.add_argument("--baseline", choices=mc.BASELINES)
    p.add_argument("--config", required=True, help="grid/experiment config JSON")
    p.add_argument("--csv", required=True, help="output CSV path")
    p.add_argument("--modulation", choices=["qpsk", "16qam", "64qam"])
    p.add_argument("--blocks", type=int, help="block count (random-init model if no --model)")
    p.add_argument("--k-factors", type=int, default=16, help="reflections for --blocks models")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=mc.default_jobs())
    if default_trials is not None:
        p.add_argument("--trials", type=int, default=default_trials)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    ap = argparse.ArgumentParser(prog="dbuofdm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--task", choices=["papr", "comm", "sense"], required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="model JSON output")
    p.add_argument("--trace", help="loss trace CSV (default: <out>.loss.csv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-papr", parents=[common], help="PAPR CCDF")
    _add_eval_common(p, 100_000)
    p.add_argument("--oversample", type=int, default=1)
    p.set_defaults(func=cmd_eval_papr)

    for metric in ("ber", "bler"):
        p = sub.add_parser(f"eval-{metric}", parents=[common], help=f"uncoded {metric.upper()} over two-ray fading")
        _add_eval_common(p)
        p.add_argument("--snr", type=_parse_snr, default=_parse_snr("0:30:5"))
        p.add_argument("--min-errors", type=int, default=100)
        p.add_argument("--min-blocks", type=int, default=0)
        p.add_argument("--max-blocks", type=int, default=100_000)
        p.add_argument("--csi", choices=["genie", "ls"], default="genie")
        p.set_defaults(func=lambda a, m=metric: _cmd_link(a, m))

    p = sub.add_parser("eval-sense", parents=[common], help="range/velocity MSE")
    _add_eval_common(p, 500)
    p.add_argument("--snr", type=_parse_snr, default=_parse_snr("0:30:10"))
    p.add_argument("--paths", type=int, default=3)
    p.add_argument("--soft", action="store_true", help="soft-argmax instead of hard peak picking")
    p.add_argument("--per-path-csv")
    p.set_defaults(func=cmd_eval_sense)

    p = sub.add_parser("fixedpoint-check", parents=[common], help="fixed-point vs float report")
    p.add_argument("--model", required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump", help="write the quantized-model JSON here")
    p.set_defaults(func=cmd_fixedpoint)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
