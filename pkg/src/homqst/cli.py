"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .config import ConfigError, RunConfig, bundled_configs, load_config
from .experiment import Dataset, dip_scan, dip_scan_csv, run_experiment
from .hom import solve_overlap_from_visibility, visibility_from_ratio
from .quantum import DensityMatrix, state_fidelity
from .tomography import DEFAULT_RESAMPLES, mle_reconstruct, reconstruct_2qubit

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class NumericalError(RuntimeError):
    pass


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    if args.out is not None:
        return Path(args.out)
    return cfg.out_dir if cfg is not None else Path("out")


def _formats(args, cfg: RunConfig | None = None) -> tuple[str, ...]:
    if args.format:
        return (args.format,)
    return cfg.formats if cfg is not None else ("json",)


def _simulate(cfg: RunConfig, expected: bool = False) -> Dataset:
    return run_experiment(cfg.rho, cfg.frame, cfg.target, cfg.probe, cfg.params, cfg.acquisition,
                          expected=expected, provenance=cfg.provenance)


def _save_dataset(args, cfg: RunConfig, ds: Dataset) -> list[Path]:
    out = _out_dir(args, cfg)
    written = []
    fmts = _formats(args, cfg)
    if "json" in fmts:
        written.append(_write(out / f"{cfg.name}.dataset.json", ds.to_json()))
    if "csv" in fmts:
        written.append(_write(out / f"{cfg.name}.dataset.csv", ds.to_csv()))
    return written


def _reconstruct(ds: Dataset, strategy, resamples, seed, workers=1, tol=1e-10, max_iter=100_000):
    if resamples and not ds.has_raw_counts:
        warnings.warn("depth-only dataset: Monte Carlo errors skipped", UserWarning, stacklevel=2)
        resamples = 0
    kw = dict(strategy=strategy, tol=tol, max_iterations=max_iter, resamples=resamples, seed=seed,
              workers=workers)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        if ds.n == 2 and ds.kind == "multi":
            res = reconstruct_2qubit(ds, **kw)
        else:
            res = mle_reconstruct(ds, **kw)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return res


def _result_doc(res, ds: Dataset, truth: DensityMatrix | None = None) -> dict:
    doc = res.to_json_dict()
    doc["provenance"] = dict(ds.provenance)
    if truth is not None:
        doc["state_fidelity"] = state_fidelity(res.rho, truth)
    return doc


def _save_result(args, out: Path, stem: str, doc: dict, res) -> list[Path]:
    written = []
    fmts = _formats(args) if args.format else ("json",)
    if "json" in fmts:
        written.append(_write(out / f"{stem}.json", json.dumps(doc, indent=2) + "\n"))
    if "csv" in fmts:
        lines = [f"# config_hash: {doc['provenance'].get('config_hash', '')}", "setting,fidelity,stderr"]
        for lab, f in res.fidelities.items():
            err = "" if res.stderr_fidelities is None else repr(res.stderr_fidelities[lab])
            lines.append(f"{lab},{f!r},{err}")
        written.append(_write(out / f"{stem}.csv", "\n".join(lines) + "\n"))
    return written


# --- commands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    ds = _simulate(cfg, expected=args.expected)
    for p in _save_dataset(args, cfg, ds):
        _say(args, f"wrote {p}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    path = Path(args.dataset)
    try:
        ds = Dataset.from_json(path.read_text())
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise OSError(f"cannot read dataset {path}: {e}") from None
    strategies = ["zero", "drop"] if args.both else [args.strategy]
    resamples = args.resamples
    if resamples is None:
        resamples = DEFAULT_RESAMPLES if ds.has_raw_counts else 0
    seed = args.seed if args.seed is not None else int(ds.provenance.get("seed", 0))
    out = _out_dir(args)
    stem = path.name.removesuffix(".json").removesuffix(".dataset")
    failed = False
    for strat in strategies:
        res = _reconstruct(ds, strat, resamples, seed, args.workers)
        suffix = f".result-{strat}" if args.both else ".result"
        for p in _save_result(args, out, stem + suffix, _result_doc(res, ds), res):
            _say(args, f"wrote {p}")
        _say(args, res.table())
        failed |= not res.converged
    if failed:
        raise NumericalError("reconstruction did not converge")
    return EXIT_OK


def cmd_dip_scan(args) -> int:
    cfg = load_config(args.config, args.seed)
    if cfg.frame.n != 1:
        raise ConfigError("dip-scan needs a single-party config")
    if args.label not in cfg.frame.local_labels:
        raise ConfigError(f"label {args.label!r} not in frame {cfg.frame.local_labels}")
    rows = dip_scan(cfg.rho, args.label, cfg.frame, cfg.target.sources[0], cfg.probe.sources[0],
                    cfg.params, cfg.acquisition)
    out = _out_dir(args, cfg)
    stem = f"{cfg.name}.dipscan-{args.label}"
    if args.format == "json":
        doc = {"provenance": cfg.provenance, "label": args.label,
               "rows": [{"delay_ps": t, "expected_probability": p, "sampled_counts": c} for t, p, c in rows]}
        path = _write(out / f"{stem}.json", json.dumps(doc, indent=2) + "\n")
    else:
        path = _write(out / f"{stem}.csv", dip_scan_csv(rows, cfg.hash))
    p_far = max(r[1] for r in rows)
    p_zero = min(r[1] for r in rows)
    _say(args, f"wrote {path}")
    _say(args, f"visibility {1 - p_zero / p_far:.4f}")
    return EXIT_OK


def cmd_visibility(args) -> int:
    if args.zeta is not None:
        zeta = args.zeta
    elif args.ns is not None and args.np is not None:
        if not args.ns > 0:
            raise ConfigError("--ns must be > 0")
        zeta = args.np / args.ns
    else:
        raise ConfigError("give --zeta or both --ns and --np")
    if not zeta > 0:
        raise ConfigError("zeta must be > 0")
    if args.invert:
        if args.vex is None:
            raise ConfigError("--invert needs --vex")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            est = solve_overlap_from_visibility(args.vex, zeta=zeta, g2_target=args.g2s, g2_probe=args.g2p)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        _say(args, f"zeta {zeta:.6g}  g2_s {args.g2s:.6g}  g2_p {args.g2p:.6g}  V_ex {args.vex:.6g}")
        _say(args, f"M {est.mode_overlap:.6f}" + ("  (clamped)" if est.clamped else ""))
        return EXIT_OK
    v = visibility_from_ratio(zeta, args.g2s, args.g2p, args.M, args.rho)
    _say(args, f"zeta {zeta:.6g}  g2_s {args.g2s:.6g}  g2_p {args.g2p:.6g}  M {args.M:.6g}")
    _say(args, f"V_th {v:.6f}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    failed = False
    for name in args.configs:
        cfg = load_config(name, args.seed)
        ds = _simulate(cfg)
        for p in _save_dataset(args, cfg, ds):
            _say(args, f"wrote {p}")
        resamples = cfg.resamples if args.resamples is None else args.resamples
        res = _reconstruct(ds, cfg.strategy, resamples, cfg.seed, cfg.workers, cfg.tol, cfg.max_iterations)
        doc = _result_doc(res, ds, cfg.rho)
        for p in _save_result(args, _out_dir(args, cfg), f"{cfg.name}.result", doc, res):
            _say(args, f"wrote {p}")
        _say(args, f"== {cfg.name}  state fidelity {doc['state_fidelity']:.4f}")
        _say(args, res.table())
        failed |= not res.converged
    if failed:
        raise NumericalError("reconstruction did not converge")
    return EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_configs():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the command name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="homqst", description="HOM-interference state tomography simulator",
                                 parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a dataset from a config")
    p.add_argument("config", help="TOML file or bundled config name")
    p.add_argument("--expected", action="store_true", help="store Poisson means instead of draws")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", parents=[common], help="reconstruct a state from a dataset")
    p.add_argument("dataset")
    p.add_argument("--strategy", choices=("native", "zero", "drop"), default=None)
    p.add_argument("--both", action="store_true", help="report the zero and drop strategies")
    p.add_argument("--resamples", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("dip-scan", parents=[common], help="export a delay scan for one probe label")
    p.add_argument("config")
    p.add_argument("--label", required=True)
    p.set_defaults(func=cmd_dip_scan)

    p = sub.add_parser("visibility", parents=[common], help="visibility and overlap calculator")
    p.add_argument("--zeta", type=float)
    p.add_argument("--ns", type=float)
    p.add_argument("--np", type=float)
    p.add_argument("--g2s", type=float, required=True)
    p.add_argument("--g2p", type=float, required=True)
    p.add_argument("--M", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--invert", action="store_true", help="solve M from --vex")
    p.add_argument("--vex", type=float)
    p.set_defaults(func=cmd_visibility)

    p = sub.add_parser("run-all", parents=[common], help="simulate, reconstruct and report")
    p.add_argument("configs", nargs="+")
    p.add_argument("--resamples", type=int, default=None)
    p.set_defaults(func=cmd_run_all)

    p = sub.add_parser("list-configs", parents=[common], help="list bundled configs")
    p.set_defaults(func=cmd_list)
    return ap


GLOBAL_DEFAULTS = {"seed": None, "out": None, "format": None, "quiet": False}


def parse_args(argv=None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    # set here, not via set_defaults: parent parsers share their action objects
    for key, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileNotFoundError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, FloatingPointError, OverflowError, RuntimeError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
