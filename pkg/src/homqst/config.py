"""Run configuration: TOML parsing, validation and provenance hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .experiment import AcquisitionConfig
from .hom import ExperimentParams
from .quantum import DensityMatrix, ProbeFrame, StateVector, build_probe_frame, named_state
from .sources import SourceEnsemble, SourceModel
from .tomography import DEFAULT_RESAMPLES, STRATEGIES


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; message names the offending field."""


SECTIONS = ("run", "target", "target_source", "probe_source", "params", "acquisition", "frame",
            "tomography", "output")


def bundled_dir():
    return resources.files("homqst") / "configs"


def bundled_configs() -> list[str]:
    return sorted(p.name for p in bundled_dir().iterdir() if p.name.endswith(".toml"))


def resolve_config_path(name: str | Path) -> Path:
    """A filesystem path, or the name of a bundled config (``.toml`` optional)."""
    p = Path(name)
    if p.exists():
        return p
    stem = p.name if p.name.endswith(".toml") else p.name + ".toml"
    candidate = bundled_dir() / stem
    if candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(f"no config file {name!r} and no bundled config of that name")


def config_hash(raw: dict) -> str:
    """sha256 of the canonical JSON form of the parsed config."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunConfig:
    name: str
    seed: int
    rho: DensityMatrix
    target: SourceEnsemble
    probe: SourceEnsemble
    params: ExperimentParams
    acquisition: AcquisitionConfig
    frame: ProbeFrame
    strategy: str | None
    resamples: int
    tol: float
    max_iterations: int
    workers: int
    out_dir: Path
    formats: tuple[str, ...]
    raw: dict
    hash: str

    @property
    def provenance(self) -> dict:
        return {"seed": self.seed, "config_hash": self.hash, "config_name": self.name}


def _section(raw, name, required=True) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _guard(section: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        msg = e.args[0] if e.args else e
        raise ConfigError(f"[{section}] {msg}") from None


def _source(sec: dict) -> SourceModel:
    unknown = set(sec) - {"kind", "mean_photon", "g2", "gn_table", "rule"}
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    return SourceModel.from_json_dict({k: v for k, v in sec.items() if k != "rule"})


def _target_state(sec: dict, base: Path) -> DensityMatrix:
    d = int(sec.get("d", 2))
    n = int(sec.get("n", 1))
    if "density_matrix_file" in sec:
        path = Path(sec["density_matrix_file"])
        if not path.is_absolute():
            path = base / path
        rho = DensityMatrix.from_json_dict(json.loads(path.read_text()))
    elif "amplitudes_re" in sec:
        re = np.asarray(sec["amplitudes_re"], float)
        im = np.asarray(sec.get("amplitudes_im", np.zeros_like(re)), float)
        rho = DensityMatrix.from_ket(StateVector.from_amplitudes(re + 1j * im))
    elif "state" in sec:
        rho = DensityMatrix.from_ket(named_state(str(sec["state"]), d, n))
    else:
        raise ValueError("give one of state, amplitudes_re or density_matrix_file")
    if rho.dim != d ** n:
        raise ValueError(f"state dimension {rho.dim} != d**n = {d ** n}")
    w = float(sec.get("white_noise", 0.0))
    if not 0 <= w <= 1:
        raise ValueError("white_noise must lie in [0, 1]")
    return rho.mix(DensityMatrix.maximally_mixed(rho.dim), w) if w else rho


def _frame(sec: dict, d: int, n: int, base: Path) -> ProbeFrame:
    kind = sec.get("kind", "qubit6" if d == 2 else "mub-full")
    custom = None
    if kind == "custom":
        path = Path(sec["custom_file"])
        if not path.is_absolute():
            path = base / path
        entries = json.loads(path.read_text())
        custom = [(e["label"], np.asarray(e["re"], float) + 1j * np.asarray(e.get("im", [0] * len(e["re"]))))
                  for e in entries]
    return build_probe_frame(d, n, kind, custom)


def parse_config(raw: dict, base: Path | str = ".", seed: int | None = None, name: str = "run") -> RunConfig:
    """Validate a parsed TOML document; ``seed`` overrides ``[run] seed``."""
    raw = copy.deepcopy(raw)
    base = Path(base)
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    run = _section(raw, "run", required=False)
    if seed is not None:
        run["seed"] = int(seed)
        raw["run"] = run
    name = str(run.get("name", name))
    seed_v = _guard("run", int, run.get("seed", 0))

    tsec = _section(raw, "target")
    d, n = _guard("target", lambda: (int(tsec.get("d", 2)), int(tsec.get("n", 1))))
    rho = _guard("target", _target_state, tsec, base)

    ts = _section(raw, "target_source")
    ps = _section(raw, "probe_source")
    target = _guard("target_source", lambda: SourceEnsemble.replicate(_source(ts), n, ts.get("rule", "independent_product")))
    probe = _guard("probe_source", lambda: SourceEnsemble.replicate(_source(ps), n, ps.get("rule", "independent_product")))

    par = _section(raw, "params")
    params = _guard("params", lambda: ExperimentParams(
        T=float(par.get("T", 0.5)),
        R=None if par.get("R") is None else float(par["R"]),
        rel_efficiency=par.get("rel_efficiency"),
        mode_overlap=float(par.get("mode_overlap", 1.0)),
        eta12=float(par.get("eta12", 1.0)),
    ))
    acq_sec = dict(_section(raw, "acquisition"))
    acq_sec["rng_seed"] = seed_v
    acquisition = _guard("acquisition", AcquisitionConfig.from_json_dict, acq_sec)
    frame = _guard("frame", _frame, _section(raw, "frame", required=False), d, n, base)
    if frame.n == 1 and params.rel_efficiency is not None:
        missing = set(frame.local_labels) - set(params.rel_efficiency)
        if missing:
            raise ConfigError(f"[params.rel_efficiency] missing labels {sorted(missing)}")

    tomo = _section(raw, "tomography", required=False)
    strategy = tomo.get("strategy")
    if strategy is not None and strategy not in STRATEGIES:
        raise ConfigError(f"[tomography] strategy must be one of {STRATEGIES}")
    out = _section(raw, "output", required=False)
    formats = tuple(out.get("formats", ("json", "csv")))
    if not set(formats) <= {"json", "csv"}:
        raise ConfigError("[output] formats must be a subset of json, csv")
    return RunConfig(
        name=name,
        seed=seed_v,
        rho=rho,
        target=target,
        probe=probe,
        params=params,
        acquisition=acquisition,
        frame=frame,
        strategy=strategy,
        resamples=_guard("tomography", int, tomo.get("resamples", DEFAULT_RESAMPLES)),
        tol=_guard("tomography", float, tomo.get("tol", 1e-10)),
        max_iterations=_guard("tomography", int, tomo.get("max_iterations", 100_000)),
        workers=_guard("tomography", int, tomo.get("workers", 1)),
        out_dir=Path(out.get("directory", "out")),
        formats=formats,
        raw=raw,
        hash=config_hash(raw),
    )


def load_config(path: str | Path, seed: int | None = None) -> RunConfig:
    p = resolve_config_path(path)
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p.name}: {e}") from None
    return parse_config(raw, p.parent, seed, name=p.stem)
