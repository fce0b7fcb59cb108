"""Density-matrix reconstruction from dip depths or raw three-point counts.

Strategies:

``native``
    Poisson likelihood of the raw zero-delay and far-delay counts, with the
    per-setting baseline and the global depth scale profiled out.  Negative
    depths need no special treatment.  Single-party data only.
``zero`` / ``drop``
    Poisson likelihood of the efficiency-normalized depths with a free
    scale; negative depths are set to zero or left out.

Multi-party depths are signed sums of coincidences measured with different
parties idle.  The sum is exact only when every label has the same relative
efficiency; otherwise the records disagree on their prefactors and the
depths carry a small bias.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernels
from .experiment import Dataset, MeasurementRecord
from .hom import extract_joint_probability_2q, subsets
from .quantum import (
    DensityMatrix,
    ProbeFrame,
    fidelity_to_ket,
    frame_design_matrix,
    frame_rank,
    hermitian_basis,
)

STRATEGIES = ("native", "zero", "drop")
DEFAULT_RESAMPLES = 500


@dataclass(frozen=True)
class DepthVector:
    """Efficiency-normalized depths, one per frame setting, in frame order."""

    labels: tuple[str, ...]
    values: np.ndarray
    flags: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "flags", tuple(self.flags))
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not len(self.labels) == len(v) == len(self.flags):
            raise ValueError("labels, values and flags must have equal length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("each setting may appear only once")

    @property
    def included(self) -> np.ndarray:
        return np.array([f != "dropped" for f in self.flags])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.values.tolist()))

    def scaled(self, factor: float) -> "DepthVector":
        return DepthVector(self.labels, self.values * factor, self.flags)


def _efficiency_map(dataset: Dataset, rel_efficiency: Mapping[str, float] | None):
    if rel_efficiency is not None:
        return dict(rel_efficiency)
    return dataset.rel_efficiency()


def _rel(eff, label: str) -> float:
    if eff is None:
        return 1.0
    try:
        return float(eff[label])
    except KeyError:
        raise ValueError(f"no relative efficiency for setting {label!r}") from None


def _record_for(records: dict, labels) -> MeasurementRecord:
    key = ",".join("-" if lab is None else lab for lab in labels)
    try:
        return records[key]
    except KeyError:
        raise ValueError(f"dataset lacks a record for setting {key}") from None


def _mobius_counts(records, labels, n) -> tuple[float, float]:
    """All-party depth counts for one label tuple and the variance of the sum."""
    total, var = 0.0, 0.0
    ref_time = None
    for sub in subsets(range(n)):
        rec = _record_for(records, [labels[i] if i in sub else None for i in range(n)])
        if rec.c_zero is None:
            raise ValueError(f"record {rec.setting} has no coincidence count")
        ref_time = rec.integration_time if ref_time is None else ref_time
        w = ref_time / rec.integration_time if rec.integration_time > 0 else 1.0
        total += (-1) ** len(sub) * rec.c_zero * w
        var += rec.c_zero * w * w
    return total, var


def normalize_depths(dataset: Dataset, rel_efficiency: Mapping[str, float] | None = None) -> DepthVector:
    """Depth per frame setting divided by its relative detection efficiency.

    Multi-party depths come from the signed sum over the zero-delay subsets
    of each label tuple.  The overall scale is left free.
    """
    eff = _efficiency_map(dataset, rel_efficiency)
    frame = dataset.frame
    records = dataset.record_map()
    values = []
    for tup in frame.label_tuples:
        if frame.n == 1:
            rec = _record_for(records, tup)
            if rec.depth_counts is None:
                raise ValueError(f"record {rec.setting} has no depth")
            depth = rec.depth_counts
        else:
            depth, _ = _mobius_counts(records, tup, frame.n)
        values.append(depth / np.prod([_rel(eff, lab) for lab in tup]))
    flags = ["negative" if v < 0 else "ok" for v in values]
    return DepthVector(tuple(frame.labels), np.array(values), tuple(flags))


def handle_negatives(depths: DepthVector, strategy: str, frame: ProbeFrame | None = None) -> DepthVector:
    """Zero or drop negative depths; with ``frame`` the remaining rank is checked."""
    if strategy not in ("zero", "drop"):
        raise ValueError(f"negative-depth strategy must be 'zero' or 'drop', got {strategy!r}")
    values = depths.values.copy()
    flags = list(depths.flags)
    for i, v in enumerate(values):
        if v < 0:
            if strategy == "zero":
                values[i] = 0.0
                flags[i] = "zeroed"
            else:
                flags[i] = "dropped"
    out = DepthVector(depths.labels, values, tuple(flags))
    if frame is not None:
        _check_rank(frame, out.included)
    return out


def _check_rank(frame: ProbeFrame, included: np.ndarray) -> None:
    rank = frame_rank(frame.kets[included])
    if rank < frame.dim ** 2:
        raise ValueError(f"remaining settings have rank {rank} < {frame.dim ** 2}; state is not determined")


def _least_squares(depths: DepthVector, frame: ProbeFrame) -> np.ndarray:
    incl = depths.included
    _check_rank(frame, incl)
    a = frame_design_matrix(frame.kets[incl])
    coef, *_ = np.linalg.lstsq(a, depths.values[incl], rcond=None)
    return np.einsum("b,bij->ij", coef, hermitian_basis(frame.dim))


def linear_inversion(depths: DepthVector, frame: ProbeFrame) -> np.ndarray:
    """Unconstrained Hermitian least-squares estimate normalized to unit trace."""
    x = _least_squares(depths, frame)
    tr = np.trace(x).real
    if not tr > 0:
        raise ValueError("linear inversion gives non-positive trace")
    return x / tr


def estimate_scale(depths: DepthVector, frame: ProbeFrame) -> float:
    """Depth per unit probability: the sum over the computational basis settings.

    Falls back to the trace of the least-squares solution when a
    computational setting is missing or dropped.
    """
    comp = frame.computational_labels()
    d = depths.as_dict()
    incl = dict(zip(depths.labels, depths.included))
    if comp and all(incl.get(lab, False) for lab in comp):
        return float(sum(d[lab] for lab in comp))
    return float(np.trace(_least_squares(depths, frame)).real)


# --- maximum likelihood --------------------------------------------------------


@dataclass
class ReconstructionResult:
    rho: DensityMatrix
    rho_linear: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    fidelities: dict[str, float]
    strategy: str
    scale: float
    trace: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    stderr_fidelities: dict[str, float] | None = None
    mc_failures: int = 0
    depths: DepthVector | None = field(default=None, repr=False)
    extracted: dict[str, tuple[float, bool]] | None = None

    def to_json_dict(self) -> dict:
        out = {
            "strategy": self.strategy,
            "converged": self.converged,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
            "scale": self.scale,
            "rho": self.rho.to_json_dict(),
            "rho_linear": {
                "dim": self.rho.dim,
                "re": self.rho_linear.real.ravel().tolist(),
                "im": self.rho_linear.imag.ravel().tolist(),
            },
            "fidelities": dict(self.fidelities),
            "stderr_fidelities": None if self.stderr_fidelities is None else dict(self.stderr_fidelities),
            "mc_failures": self.mc_failures,
        }
        if self.extracted is not None:
            out["extracted"] = {k: {"value": v, "flagged": f} for k, (v, f) in self.extracted.items()}
        return out

    def table(self) -> str:
        lines = [f"strategy {self.strategy}  iterations {self.iterations}  converged {self.converged}"]
        lines.append(f"{'setting':>10} {'fidelity':>10} {'stderr':>10}")
        for lab, f in self.fidelities.items():
            err = "" if self.stderr_fidelities is None else f"{self.stderr_fidelities[lab]:10.4f}"
            lines.append(f"{lab:>10} {f:10.4f} {err:>10}")
        return "\n".join(lines)


def frame_fidelities(rho: DensityMatrix, frame: ProbeFrame) -> dict[str, float]:
    return {lab: fidelity_to_ket(rho, ket) for lab, ket in frame.settings}


def default_strategy(dataset: Dataset) -> str:
    """``native`` for raw single-party counts; otherwise ``drop``, or ``zero``
    when the frame has no redundant setting to spare."""
    if dataset.n == 1 and dataset.has_raw_counts and dataset.kind == "hom":
        return "native"
    frame = dataset.frame
    return "drop" if len(frame.labels) > frame.dim ** 2 else "zero"


def _psd_projection(x: np.ndarray) -> np.ndarray | None:
    """Nearest unit-trace positive matrix by clipping eigenvalues, or None."""
    if not np.all(np.isfinite(x)):
        return None
    w, v = np.linalg.eigh(0.5 * (x + x.conj().T))
    w = np.clip(w, 0.0, None)
    if not w.sum() > 0:
        return None
    return (v * (w / w.sum())) @ v.conj().T


def mle_reconstruct(
    dataset: Dataset,
    frame: ProbeFrame | None = None,
    rel_efficiency: Mapping[str, float] | None = None,
    *,
    strategy: str | None = None,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
    resamples: int = 0,
    seed: int = 0,
    backend: str | None = None,
    workers: int = 1,
) -> ReconstructionResult:
    """Diluted maximum-likelihood estimate starting from the maximally mixed state.

    The iteration cannot reach rank-deficient states in finite steps, so the
    positive part of the linear-inversion estimate is also scored and kept
    when its likelihood is higher.  Non-convergence emits a ``RuntimeWarning`` and sets ``converged=False``.
    With ``resamples > 0`` Monte Carlo standard errors are attached.
    """
    frame = dataset.frame if frame is None else frame
    strategy = default_strategy(dataset) if strategy is None else strategy
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    kern = _kernels.get_backend(backend)
    eff = _efficiency_map(dataset, rel_efficiency)
    kets = np.ascontiguousarray(frame.kets)
    rho0 = np.eye(frame.dim, dtype=complex) / frame.dim

    depths = normalize_depths(dataset, eff)
    if strategy == "native":
        if frame.n != 1 or not dataset.has_raw_counts:
            raise ValueError("native strategy needs raw single-party three-point counts")
        records = dataset.record_map()
        recs = [_record_for(records, tup) for tup in frame.label_tuples]
        if any(not r.c_far for r in recs):
            raise ValueError("native strategy needs far-delay counts")
        c_zero = np.array([r.c_zero for r in recs], float)
        far_sum = np.array([sum(r.c_far) for r in recs], float)
        n_far = np.array([len(r.c_far) for r in recs], float)
        times = np.array([r.integration_time for r in recs], float)
        eta = np.array([_rel(eff, r.labels[0]) for r in recs])
        if np.any(times <= 0):
            raise ValueError("native strategy needs positive integration times")
        rho, ll, it, conv, trace, scale = kern.counts_mle(
            kets, c_zero, far_sum, n_far, times, eta, rho0, tol, max_iterations)
        try:
            rho_lin = linear_inversion(depths, frame)
        except ValueError:
            rho_lin = np.full((frame.dim, frame.dim), np.nan, complex)
        cand = _psd_projection(rho_lin)
        if cand is not None:
            ll_c, scale_c = kern.counts_loglik(kets, cand, c_zero, far_sum, n_far, times, eta)
            if ll_c > ll:
                rho, ll, scale = cand, ll_c, scale_c
                trace = np.append(trace, ll)
    else:
        depths = handle_negatives(depths, strategy, frame)
        rho, ll, it, conv, trace, _ = kern.depth_mle(
            kets, depths.values, depths.included, rho0, tol, max_iterations)
        rho_lin = linear_inversion(depths, frame)
        cand = _psd_projection(rho_lin)
        if cand is not None:
            ll_c = kern.depth_loglik(kets, cand, depths.values, depths.included)
            if ll_c > ll:
                rho, ll = cand, ll_c
                trace = np.append(trace, ll)
        incl = depths.included
        p = np.einsum("ki,ij,kj->k", kets.conj(), rho, kets).real
        scale = float(depths.values[incl].sum() / p[incl].sum())

    if not conv:
        warnings.warn(f"MLE did not converge in {it} iterations", RuntimeWarning, stacklevel=2)
    est = DensityMatrix.from_array(rho)
    result = ReconstructionResult(
        rho=est,
        rho_linear=rho_lin,
        log_likelihood=float(ll),
        iterations=int(it),
        converged=bool(conv),
        fidelities=frame_fidelities(est, frame),
        strategy=strategy,
        scale=float(scale),
        trace=np.asarray(trace),
        depths=depths,
    )
    if resamples:
        mc = fidelity_errors(dataset, resamples, seed, frame=frame, rel_efficiency=eff, strategy=strategy,
                             tol=tol, max_iterations=max_iterations, backend=backend, workers=workers)
        result.stderr_fidelities = mc.stderr
        result.mc_failures = mc.failures
    return result


@dataclass
class MonteCarloErrors:
    stderr: dict[str, float]
    failures: int
    n_resamples: int
    samples: np.ndarray = field(repr=False)


def resample_dataset(dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Redraw every count as Poisson with the observed count as mean."""
    out = []
    for r in dataset.records:
        c0 = int(rng.poisson(r.c_zero))
        far = tuple(int(rng.poisson(c)) for c in r.c_far)
        out.append(MeasurementRecord(r.labels, c0, far, None, r.integration_time))
    return dataset.replace_records(out)


def _one_resample(args):
    dataset, frame, eff, strategy, seed, i, noise, tol, max_iter, backend = args
    ds = dataset
    if noise:
        ds = resample_dataset(dataset, np.random.default_rng(np.random.SeedSequence([seed, i])))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = mle_reconstruct(ds, frame, eff, strategy=strategy, tol=tol,
                                  max_iterations=max_iter, backend=backend)
    except (ValueError, FloatingPointError):
        return None
    if not res.converged:
        return None
    return [res.fidelities[lab] for lab in frame.labels]


def fidelity_errors(
    dataset: Dataset,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    *,
    frame: ProbeFrame | None = None,
    rel_efficiency: Mapping[str, float] | None = None,
    strategy: str | None = None,
    noise: bool = True,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
    backend: str | None = None,
    workers: int = 1,
) -> MonteCarloErrors:
    """Monte Carlo standard deviation of every frame fidelity.

    Resample ``i`` draws from its own generator keyed by ``(seed, i)``, so
    the result does not depend on ``workers``.  Failed or non-converged
    resamples are counted and left out.  ``noise=False`` reuses the observed
    counts (a zero-variance check).
    """
    if n_resamples < 2:
        raise ValueError("need at least 2 resamples")
    if not dataset.has_raw_counts:
        raise ValueError("Monte Carlo errors need raw counts; depth-only datasets cannot be resampled")
    frame = dataset.frame if frame is None else frame
    strategy = default_strategy(dataset) if strategy is None else strategy
    eff = _efficiency_map(dataset, rel_efficiency)
    jobs = [(dataset, frame, eff, strategy, seed, i, noise, tol, max_iterations, backend)
            for i in range(n_resamples)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_one_resample, jobs, chunksize=max(1, n_resamples // (4 * workers))))
    else:
        rows = [_one_resample(j) for j in jobs]
    ok = np.array([r for r in rows if r is not None], float).reshape(-1, len(frame.labels))
    failures = n_resamples - len(ok)
    if len(ok) < 2:
        raise RuntimeError(f"only {len(ok)} of {n_resamples} resamples succeeded")
    std = ok.std(axis=0, ddof=1)
    return MonteCarloErrors(dict(zip(frame.labels, std.tolist())), failures, n_resamples, ok)


def conventional_qst(
    rho_true: DensityMatrix,
    frame: ProbeFrame,
    counts_per_setting: float,
    seed: int = 0,
    *,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
    backend: str | None = None,
) -> ReconstructionResult:
    """Projective-measurement baseline: Poisson counts with mean ``counts_per_setting * <k|rho|k>``."""
    if not counts_per_setting > 0:
        raise ValueError("counts_per_setting must be > 0")
    if rho_true.dim != frame.dim:
        raise ValueError("state and frame dimensions differ")
    kets = np.ascontiguousarray(frame.kets)
    p = np.clip(np.einsum("ki,ij,kj->k", kets.conj(), rho_true.elements, kets).real, 0, None)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    counts = rng.poisson(counts_per_setting * p).astype(float)
    kern = _kernels.get_backend(backend)
    rho0 = np.eye(frame.dim, dtype=complex) / frame.dim
    included = np.ones(len(counts), bool)
    rho, ll, it, conv, trace, _ = kern.depth_mle(kets, counts, included, rho0, tol, max_iterations)
    if not conv:
        warnings.warn(f"MLE did not converge in {it} iterations", RuntimeWarning, stacklevel=2)
    depths = DepthVector(tuple(frame.labels), counts, ("ok",) * len(counts))
    est = DensityMatrix.from_array(rho)
    return ReconstructionResult(
        rho=est,
        rho_linear=linear_inversion(depths, frame),
        log_likelihood=float(ll),
        iterations=int(it),
        converged=bool(conv),
        fidelities=frame_fidelities(est, frame),
        strategy="conventional",
        scale=float(counts.sum() / np.einsum("ki,ij,kj->k", kets.conj(), rho, kets).real.sum()),
        trace=np.asarray(trace),
        depths=depths,
    )


def reconstruct_2qubit(
    dataset: Dataset,
    frame: ProbeFrame | None = None,
    rel_efficiency: Mapping[str, float] | None = None,
    *,
    scale: float | None = None,
    strategy: str | None = None,
    **options,
) -> ReconstructionResult:
    """Two-party reconstruction from joint, single-party and baseline records.

    Each joint probability is first extracted on its own (flagged when it
    leaves [0, 1] by more than 3 standard errors), then the full depth
    vector goes through the same likelihood fit as single-party data.
    ``scale`` is the depth count for unit probability; by default it is
    estimated from the computational-basis settings.
    """
    frame = dataset.frame if frame is None else frame
    if frame.n != 2 or dataset.kind != "multi":
        raise ValueError("reconstruct_2qubit needs a two-party dataset with joint and marginal records")
    eff = _efficiency_map(dataset, rel_efficiency)
    depths = normalize_depths(dataset, eff)
    if scale is None:
        scale = estimate_scale(depths, frame)
    records = dataset.record_map()
    extracted = {}
    for lab, tup in zip(frame.labels, frame.label_tuples):
        k1, k2 = tup
        get = lambda a, b: _record_for(records, (a, b)).c_zero  # noqa: E731
        _, var = _mobius_counts(records, tup, 2)
        w = _rel(eff, k1) * _rel(eff, k2)
        ex = extract_joint_probability_2q(get(k1, k2), get(k1, None), get(None, k2), get(None, None),
                                          scale * w, np.sqrt(var) / (scale * w))
        extracted[lab] = (ex.value, ex.flagged)
    result = mle_reconstruct(dataset, frame, eff, strategy=strategy or default_strategy(dataset), **options)
    result.extracted = extracted
    return result
