"""Synthetic acquisition: dip lineshapes, Poisson counts, three-point records.

Every record draws from its own generator seeded by ``(seed, record index)``,
so a dataset does not depend on the order in which settings are simulated.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .hom import (
    ExperimentParams,
    MultiSetting,
    coincidence_infinite_delay,
    dip_depth,
    joint_probabilities_for,
    multi_coincidence,
    subsets,
)
from .quantum import DensityMatrix, ProbeFrame, projection_probability
from .sources import SourceEnsemble, SourceModel

MAX_MEAN = 1e15
DATASET_KINDS = ("hom", "multi", "depth", "conventional")
CSV_COLUMNS = ("setting", "c_zero", "c_far_1", "c_far_2", "depth", "time")


@dataclass(frozen=True)
class AcquisitionConfig:
    """Timing and detection settings shared by every measured point.

    Delays and the coherence time are in ps, rates in Hz, times in s.
    ``far_delay_factor`` places the two baseline points at
    ``+-far_delay_factor * coherence_time``.
    """

    repetition_rate: float = 250e6
    integration_time: float = 1.0
    dark_rate: float = 0.0
    coherence_time: float = 10.0
    delay_grid: tuple[float, ...] = ()
    rng_seed: int = 0
    misalignment_drift: float = 0.0
    far_delay_factor: float = 5.0

    def __post_init__(self):
        if not self.repetition_rate > 0:
            raise ValueError("repetition_rate must be > 0")
        if not self.integration_time >= 0:
            raise ValueError("integration_time must be >= 0")
        if not self.coherence_time > 0:
            raise ValueError("coherence_time must be > 0")
        if not self.dark_rate >= 0:
            raise ValueError("dark_rate must be >= 0")
        if self.far_delay_factor < 5:
            raise ValueError("far delays must sit at least 5 coherence times from the dip")
        if not 0 <= self.rng_seed < 2 ** 64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        grid = self.delay_grid
        if not grid:
            span = 2 * self.far_delay_factor * self.coherence_time
            grid = np.linspace(-span, span, 81)
        object.__setattr__(self, "delay_grid", tuple(float(x) for x in grid))

    @property
    def far_delays(self) -> tuple[float, float]:
        tau = self.far_delay_factor * self.coherence_time
        return (-tau, tau)

    def to_json_dict(self) -> dict:
        return {
            "repetition_rate": self.repetition_rate,
            "integration_time": self.integration_time,
            "dark_rate": self.dark_rate,
            "coherence_time": self.coherence_time,
            "delay_grid": list(self.delay_grid),
            "rng_seed": self.rng_seed,
            "misalignment_drift": self.misalignment_drift,
            "far_delay_factor": self.far_delay_factor,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "AcquisitionConfig":
        data = dict(data)
        data["delay_grid"] = tuple(data.get("delay_grid", ()))
        return cls(**data)


@dataclass(frozen=True)
class MeasurementRecord:
    """Counts for one probe setting.

    ``labels`` has one entry per party, ``None`` for parties held at far
    delay.  For single-party records ``c_far`` holds the two baseline counts
    and ``depth_counts`` is ``mean(c_far) - c_zero``.  Multi-party records
    carry one coincidence count in ``c_zero`` and no depth.  Depth-only
    records (``c_zero is None``) keep just the derived depth.
    """

    labels: tuple[str | None, ...]
    c_zero: float | None
    c_far: tuple[float, ...] = ()
    depth_counts: float | None = None
    integration_time: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "c_far", tuple(self.c_far))
        if self.c_zero is not None and self.c_zero < 0 or any(c < 0 for c in self.c_far):
            raise ValueError("counts must be >= 0")
        if self.depth_counts is None and self.c_zero is not None and self.c_far:
            object.__setattr__(self, "depth_counts", float(np.mean(self.c_far)) - self.c_zero)

    @property
    def setting(self) -> str:
        return ",".join("-" if lab is None else lab for lab in self.labels)

    @property
    def zero_delay(self) -> frozenset[int]:
        return frozenset(i for i, lab in enumerate(self.labels) if lab is not None)

    def to_json_dict(self) -> dict:
        return {
            "setting": self.setting,
            "c_zero": self.c_zero,
            "c_far": list(self.c_far),
            "depth": self.depth_counts,
            "time": self.integration_time,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "MeasurementRecord":
        labels = tuple(None if s == "-" else s for s in str(data["setting"]).split(","))
        return cls(
            labels=labels,
            c_zero=data.get("c_zero"),
            c_far=tuple(data.get("c_far", ())),
            depth_counts=data.get("depth"),
            integration_time=float(data["time"]),
        )


def _num(x):
    # integral floats print without a trailing .0 so CSV stays integer-looking
    if x is None:
        return ""
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return repr(x) if isinstance(x, float) else str(x)


@dataclass
class Dataset:
    frame: ProbeFrame
    records: list[MeasurementRecord]
    params: ExperimentParams | None = None
    kind: str = "hom"
    provenance: dict = field(default_factory=dict)
    sources: dict | None = None
    acquisition: AcquisitionConfig | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.frame.n

    @property
    def has_raw_counts(self) -> bool:
        return all(r.c_zero is not None for r in self.records)

    def record_map(self) -> dict[str, MeasurementRecord]:
        return {r.setting: r for r in self.records}

    def rel_efficiency(self) -> dict[str, float] | None:
        if self.params is None or self.params.rel_efficiency is None:
            return None
        return dict(self.params.rel_efficiency)

    def replace_records(self, records: Sequence[MeasurementRecord]) -> "Dataset":
        return Dataset(self.frame, list(records), self.params, self.kind, dict(self.provenance),
                       self.sources, self.acquisition)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "provenance": dict(self.provenance),
            "frame": self.frame.to_json_dict(),
            "params": None if self.params is None else self.params.to_json_dict(),
            "sources": self.sources,
            "acquisition": None if self.acquisition is None else self.acquisition.to_json_dict(),
            "records": [r.to_json_dict() for r in self.records],
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "Dataset":
        params = data.get("params")
        acq = data.get("acquisition")
        return cls(
            frame=ProbeFrame.from_json_dict(data["frame"]),
            records=[MeasurementRecord.from_json_dict(r) for r in data["records"]],
            params=None if params is None else ExperimentParams.from_json_dict(params),
            kind=data.get("kind", "hom"),
            provenance=dict(data.get("provenance", {})),
            sources=data.get("sources"),
            acquisition=None if acq is None else AcquisitionConfig.from_json_dict(acq),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        return cls.from_json_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_hash: {self.provenance.get('config_hash', '')}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            far = list(r.c_far) + [None] * (2 - len(r.c_far))
            w.writerow([r.setting, _num(r.c_zero), _num(far[0]), _num(far[1]),
                        _num(r.depth_counts), _num(r.integration_time)])
        return buf.getvalue()


# --- sampling ---------------------------------------------------------------


def record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def dip_profile(depth: float, p_inf: float, delay: float, coherence_time: float, drift: float = 0.0) -> float:
    """Gaussian dip on a baseline tilted by ``drift`` (relative change per ps)."""
    if not coherence_time > 0:
        raise ValueError("coherence_time must be > 0")
    if math.isinf(delay):
        return p_inf
    return p_inf * (1.0 + drift * delay) - depth * math.exp(-(delay / coherence_time) ** 2)


def expected_counts(probability: float, config: AcquisitionConfig) -> float:
    mean = (probability * config.repetition_rate + config.dark_rate) * config.integration_time
    if not math.isfinite(mean) or mean > MAX_MEAN:
        raise OverflowError(f"Poisson mean {mean!r} out of range")
    if mean < 0:
        raise ValueError(f"negative expected count {mean!r}")
    return mean


def sample_counts(probability: float, config: AcquisitionConfig, rng: np.random.Generator) -> int:
    """Poisson count for a per-pulse probability over one integration window."""
    return int(rng.poisson(expected_counts(probability, config)))


def _draw(p, config, rng, expected):
    return expected_counts(p, config) if expected else sample_counts(p, config, rng)


def three_point_measurement(
    rho: DensityMatrix,
    label: str,
    frame: ProbeFrame,
    target: SourceModel,
    probe: SourceModel,
    params: ExperimentParams,
    config: AcquisitionConfig,
    rng: np.random.Generator | None = None,
    expected: bool = False,
) -> MeasurementRecord:
    """Counts at zero delay and at the two far delays for one probe label.

    With ``expected`` the Poisson means are stored instead of draws.
    """
    if rng is None and not expected:
        raise ValueError("rng required unless expected=True")
    rho_k = projection_probability(rho, frame.local_ket(label))
    depth = dip_depth(rho_k, label, target, probe, params)
    p_inf = coincidence_infinite_delay(target, probe, params, label)
    p0 = dip_profile(depth, p_inf, 0.0, config.coherence_time, config.misalignment_drift)
    far = [dip_profile(depth, p_inf, tau, config.coherence_time, config.misalignment_drift)
           for tau in config.far_delays]
    c0 = _draw(p0, config, rng, expected)
    cf = tuple(_draw(p, config, rng, expected) for p in far)
    return MeasurementRecord((label,), c0, cf, integration_time=config.integration_time)


def multi_settings(frame: ProbeFrame) -> list[MultiSetting]:
    """Every zero-delay subset with every label assignment on it.

    For n = 2 and a 4-label frame: 16 joint, 2 x 4 single-party and one
    all-far baseline setting.
    """
    out = []
    n = frame.n
    for sub in sorted(subsets(range(n)), key=lambda s: (-len(s), sorted(s))):
        for combo in itertools.product(frame.local_labels, repeat=len(sub)):
            labels: list[str | None] = [None] * n
            for i, lab in zip(sorted(sub), combo):
                labels[i] = lab
            out.append(MultiSetting(n, sub, tuple(labels)))
    return out


def _as_ensemble(src, n) -> SourceEnsemble:
    if isinstance(src, SourceEnsemble):
        if src.n != n:
            raise ValueError(f"ensemble covers {src.n} parties, frame has {n}")
        return src
    return SourceEnsemble.replicate(src, n)


def run_experiment(
    rho: DensityMatrix,
    frame: ProbeFrame,
    target: SourceModel | SourceEnsemble,
    probe: SourceModel | SourceEnsemble,
    params: ExperimentParams,
    config: AcquisitionConfig,
    expected: bool = False,
    provenance: Mapping | None = None,
) -> Dataset:
    """Simulate every setting the protocol needs for ``frame``."""
    if rho.dim != frame.dim:
        raise ValueError(f"state dimension {rho.dim} does not match frame dimension {frame.dim}")
    prov = {"seed": config.rng_seed, **(provenance or {})}
    targets, probes = _as_ensemble(target, frame.n), _as_ensemble(probe, frame.n)
    sources = {"target": targets.to_json_dict(), "probe": probes.to_json_dict()}
    records = []
    if frame.n == 1:
        for i, lab in enumerate(frame.local_labels):
            rng = None if expected else record_rng(config.rng_seed, i)
            records.append(three_point_measurement(
                rho, lab, frame, targets.sources[0], probes.sources[0], params, config, rng, expected))
        return Dataset(frame, records, params, "hom", prov, sources, config)

    local = dict(zip(frame.local_labels, frame.local_kets))
    for i, setting in enumerate(multi_settings(frame)):
        joint = joint_probabilities_for(rho, setting, local, frame.d)
        p = multi_coincidence(setting, joint, targets, probes, params)
        rng = None if expected else record_rng(config.rng_seed, i)
        records.append(MeasurementRecord(setting.labels, _draw(p, config, rng, expected),
                                         integration_time=config.integration_time))
    return Dataset(frame, records, params, "multi", prov, sources, config)


def depth_dataset(
    frame: ProbeFrame,
    depth_rates: Mapping[str, float],
    integration_time: float,
    params: ExperimentParams | None = None,
    normalized: bool = True,
    provenance: Mapping | None = None,
) -> Dataset:
    """Dataset holding only depth rates (Hz) for single-party labels.

    With ``normalized`` the rates are taken as already divided by the
    relative efficiencies in ``params`` and are scaled back to raw depths.
    """
    records = []
    for lab in frame.local_labels:
        rate = float(depth_rates[lab])
        if normalized and params is not None:
            rate *= params.relative(lab)
        records.append(MeasurementRecord((lab,), None, (), rate * integration_time, integration_time))
    return Dataset(frame, records, params, "depth", dict(provenance or {}))


def dip_scan(
    rho: DensityMatrix,
    label: str,
    frame: ProbeFrame,
    target: SourceModel,
    probe: SourceModel,
    params: ExperimentParams,
    config: AcquisitionConfig,
) -> list[tuple[float, float, int]]:
    """(delay_ps, expected_probability, sampled_counts) along the delay grid."""
    rho_k = projection_probability(rho, frame.local_ket(label))
    depth = dip_depth(rho_k, label, target, probe, params)
    p_inf = coincidence_infinite_delay(target, probe, params, label)
    rows = []
    for i, tau in enumerate(config.delay_grid):
        p = dip_profile(depth, p_inf, tau, config.coherence_time, config.misalignment_drift)
        rows.append((tau, p, sample_counts(p, config, record_rng(config.rng_seed, i))))
    return rows


def dip_scan_csv(rows, config_hash: str = "") -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash: {config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("delay_ps", "expected_probability", "sampled_counts"))
    for tau, p, c in rows:
        w.writerow((repr(float(tau)), repr(float(p)), int(c)))
    return buf.getvalue()
