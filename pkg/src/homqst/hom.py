"""Closed-form HOM coincidence model for one or several interferometers.

Single interferometer, beam splitter with transmittance T and reflectance R:

    P_inf = eta * (T R (n_s^2 g2_s + n_p^2 g2_p) + (T^2 + R^2) n_s n_p)
    depth = 2 eta T R n_s n_p M rho_k
    P_k   = P_inf - depth

For several interferometers the coincidence probability with parties ``S`` at
zero delay is the signed sum over subsets ``S'`` of ``S`` of depth terms, each
built from per-party factors: interfering parties contribute
``2 T R N_t,k N_p,k`` (mode-matched part only), idle parties the far-delay
factor ``T R N_t^2 + T R N_p^2 + (T^2 + R^2) N_t N_p``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .quantum import DensityMatrix, StateVector, joint_probability
from .sources import SourceEnsemble, SourceModel, g_n


@dataclass(frozen=True)
class ExperimentParams:
    """Beam splitter, detection efficiency and mode-overlap parameters.

    ``rel_efficiency`` maps probe labels to eta_kk / eta_ref.  ``None`` means
    every label is detected with the reference efficiency ``eta12``.
    """

    T: float = 0.5
    R: float | None = None
    rel_efficiency: Mapping[str, float] | None = None
    mode_overlap: float = 1.0
    eta12: float = 1.0

    def __post_init__(self):
        R = 1.0 - self.T if self.R is None else self.R
        object.__setattr__(self, "R", float(R))
        if not (0 < self.T < 1 and 0 < R < 1):
            raise ValueError("T and R must lie in (0, 1)")
        if abs(self.T + R - 1.0) > 1e-12:
            raise ValueError(f"T + R must equal 1, got {self.T + R!r}")
        if not 0 <= self.mode_overlap <= 1:
            raise ValueError("mode_overlap must lie in [0, 1]")
        if not 0 < self.eta12 <= 1:
            raise ValueError("eta12 must lie in (0, 1]")
        if self.rel_efficiency is not None:
            eff = {str(k): float(v) for k, v in self.rel_efficiency.items()}
            if any(not v > 0 for v in eff.values()):
                raise ValueError("relative efficiencies must be > 0")
            if eff and not any(v == 1.0 for v in eff.values()):
                raise ValueError("one reference label must have relative efficiency exactly 1")
            object.__setattr__(self, "rel_efficiency", eff)

    def relative(self, label: str | None) -> float:
        if label is None or self.rel_efficiency is None:
            return 1.0
        try:
            return self.rel_efficiency[label]
        except KeyError:
            raise KeyError(f"no relative efficiency for label {label!r}") from None

    def efficiency(self, label: str | None) -> float:
        return self.eta12 * self.relative(label)

    def to_json_dict(self) -> dict:
        return {
            "T": self.T,
            "R": self.R,
            "eta12": self.eta12,
            "mode_overlap": self.mode_overlap,
            "rel_efficiency": None if self.rel_efficiency is None else dict(self.rel_efficiency),
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ExperimentParams":
        return cls(
            T=float(data["T"]),
            R=float(data["R"]),
            rel_efficiency=data.get("rel_efficiency"),
            mode_overlap=float(data["mode_overlap"]),
            eta12=float(data["eta12"]),
        )


@dataclass(frozen=True)
class DipObservables:
    p_k: float
    p_inf: float
    depth: float
    visibility: float

    def to_json_dict(self) -> dict:
        return {"p_k": self.p_k, "p_inf": self.p_inf, "depth": self.depth, "visibility": self.visibility}


def _check_probability(x: float, name: str = "rho_k") -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must be a probability in [0, 1], got {x!r}")


def _idle_factor(target: SourceModel, probe: SourceModel, params: ExperimentParams) -> float:
    ns, np_ = target.mean_photon, probe.mean_photon
    tr = params.T * params.R
    return tr * (ns * ns * target.g2 + np_ * np_ * probe.g2) + (params.T ** 2 + params.R ** 2) * ns * np_


def coincidence_infinite_delay(
    target: SourceModel, probe: SourceModel, params: ExperimentParams, label: str | None = None
) -> float:
    return params.efficiency(label) * _idle_factor(target, probe, params)


def dip_depth(
    rho_k: float, label: str | None, target: SourceModel, probe: SourceModel, params: ExperimentParams
) -> float:
    _check_probability(rho_k)
    eta = params.efficiency(label)
    return 2.0 * eta * params.T * params.R * target.mean_photon * probe.mean_photon * params.mode_overlap * rho_k


def coincidence_zero_delay(
    rho_k: float,
    target: SourceModel,
    probe: SourceModel,
    params: ExperimentParams,
    label: str | None = None,
) -> float:
    return coincidence_infinite_delay(target, probe, params, label) - dip_depth(rho_k, label, target, probe, params)


def dip_observables(
    rho_k: float, label: str | None, target: SourceModel, probe: SourceModel, params: ExperimentParams
) -> DipObservables:
    p_inf = coincidence_infinite_delay(target, probe, params, label)
    depth = dip_depth(rho_k, label, target, probe, params)
    vis = depth / p_inf if p_inf > 0 else 0.0
    return DipObservables(p_k=p_inf - depth, p_inf=p_inf, depth=depth, visibility=vis)


def visibility_from_ratio(zeta: float, g2_target: float, g2_probe: float, mode_overlap: float, rho_k: float = 1.0) -> float:
    """Balanced-splitter visibility as a function of zeta = n_p / n_s."""
    if not zeta > 0:
        raise ValueError("zeta = n_p / n_s must be > 0")
    return mode_overlap * rho_k / (1.0 + 0.5 * (zeta * g2_probe + g2_target / zeta))


def visibility(target: SourceModel, probe: SourceModel, mode_overlap: float, rho_k: float = 1.0) -> float:
    """Dip visibility depth / P_inf for a balanced splitter."""
    if target.mean_photon <= 0 or probe.mean_photon <= 0:
        raise ValueError("visibility needs non-zero mean photon numbers")
    _check_probability(rho_k)
    return visibility_from_ratio(probe.mean_photon / target.mean_photon, target.g2, probe.g2, mode_overlap, rho_k)


class OverlapEstimate(NamedTuple):
    mode_overlap: float
    clamped: bool


def solve_overlap_from_visibility(
    v_ex: float,
    target: SourceModel | None = None,
    probe: SourceModel | None = None,
    zeta: float | None = None,
    *,
    g2_target: float | None = None,
    g2_probe: float | None = None,
) -> OverlapEstimate:
    """Mode overlap M that reproduces a measured visibility at rho_k = 1.

    ``zeta`` defaults to the ratio of the sources' mean photon numbers; the
    g2 values come from the sources unless given explicitly.
    """
    _check_probability(v_ex, "v_ex")
    g2s = g2_target if g2_target is not None else target.g2
    g2p = g2_probe if g2_probe is not None else probe.g2
    if zeta is None:
        zeta = probe.mean_photon / target.mean_photon
    if not zeta > 0:
        raise ValueError("zeta must be > 0")
    m = v_ex * (1.0 + 0.5 * (zeta * g2p + g2s / zeta))
    if not math.isfinite(m):
        raise ValueError("non-finite mode overlap")
    if m > 1.0:
        warnings.warn(f"mode overlap {m:.4f} exceeds 1; clamped", RuntimeWarning, stacklevel=2)
        return OverlapEstimate(1.0, True)
    return OverlapEstimate(m, False)


# --- n interferometers -----------------------------------------------------


@dataclass(frozen=True)
class MultiSetting:
    """Parties in ``zero_delay`` interfere at zero delay with the given probe labels.

    ``labels[i]`` is ``None`` exactly for parties outside ``zero_delay``.
    Parties are indexed from 0.
    """

    n: int
    zero_delay: frozenset[int]
    labels: tuple[str | None, ...] = field(default=())

    def __post_init__(self):
        s = frozenset(self.zero_delay)
        object.__setattr__(self, "zero_delay", s)
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) != self.n:
            raise ValueError("one label slot per party required")
        if not s <= set(range(self.n)):
            raise ValueError("zero-delay set contains unknown parties")
        for i, lab in enumerate(self.labels):
            if (lab is None) == (i in s):
                raise ValueError(f"party {i}: label must be set exactly when the party is at zero delay")

    @property
    def name(self) -> str:
        return ",".join("-" if lab is None else lab for lab in self.labels)


def _as_list(params, n) -> list[ExperimentParams]:
    if isinstance(params, ExperimentParams):
        return [params] * n
    params = list(params)
    if len(params) != n:
        raise ValueError(f"need parameters for {n} parties, got {len(params)}")
    return params


def _party_terms(p: ExperimentParams, interfering: bool) -> list[tuple[float, int, int]]:
    """(coefficient, target power, probe power) terms of one party's factor."""
    tr = p.T * p.R
    if interfering:
        return [(2.0 * tr, 1, 1)]
    return [(tr, 2, 0), (tr, 0, 2), (p.T ** 2 + p.R ** 2, 1, 1)]


def _single_moment(source: SourceModel, power: int) -> float:
    return g_n(source, power) * source.mean_photon ** power


def multi_dip_term(
    interfering: frozenset[int] | set[int],
    labels: Sequence[str | None],
    rho_joint: float,
    targets: SourceEnsemble,
    probes: SourceEnsemble,
    params: ExperimentParams | Sequence[ExperimentParams],
) -> float:
    """Depth term for the parties in ``interfering`` (the subset S').

    ``labels`` is the probe label assignment of the measured setting and
    fixes each party's detection efficiency; ``rho_joint`` is the reduced
    probability of the interfering parties' labels.
    """
    n = len(labels)
    if targets.n != n or probes.n != n:
        raise ValueError("ensembles must cover every party")
    plist = _as_list(params, n)
    interfering = frozenset(interfering)
    if any(labels[j] is None for j in interfering):
        raise ValueError("interfering parties need a probe label")
    _check_probability(rho_joint, "rho_joint")

    prefactor = rho_joint
    for i, p in enumerate(plist):
        prefactor *= p.efficiency(labels[i])
        if i in interfering:
            prefactor *= p.mode_overlap
    if prefactor == 0.0:
        return 0.0

    terms = [_party_terms(p, i in interfering) for i, p in enumerate(plist)]
    if targets.rule == "independent_product" and probes.rule == "independent_product":
        # independent parties: the moment sum factorizes party by party
        total = 1.0
        for i, party in enumerate(terms):
            ts, ps = targets.sources[i], probes.sources[i]
            total *= sum(c * _single_moment(ts, a) * _single_moment(ps, b) for c, a, b in party)
        return prefactor * total

    total = 0.0
    for combo in itertools.product(*terms):
        coef = math.prod(c for c, _, _ in combo)
        total += coef * targets.moment([a for _, a, _ in combo]) * probes.moment([b for _, _, b in combo])
    return prefactor * total


def _subsets(s: frozenset[int]):
    items = sorted(s)
    for r in range(len(items) + 1):
        for c in itertools.combinations(items, r):
            yield frozenset(c)


def multi_coincidence(
    setting: MultiSetting,
    joint_probabilities: Mapping[frozenset[int], float],
    targets: SourceEnsemble,
    probes: SourceEnsemble,
    params: ExperimentParams | Sequence[ExperimentParams],
) -> float:
    """2n-fold coincidence probability via inclusion-exclusion over subsets of S."""
    total = 0.0
    for sub in _subsets(setting.zero_delay):
        rho = 1.0 if not sub else joint_probabilities[sub]
        total += (-1) ** len(sub) * multi_dip_term(sub, setting.labels, rho, targets, probes, params)
    return total


def joint_probabilities_for(
    rho: DensityMatrix, setting: MultiSetting, local_kets: Mapping[str, StateVector], d: int
) -> dict[frozenset[int], float]:
    """Reduced probabilities rho_kappa(S') for every subset S' of the zero-delay set."""
    out = {}
    for sub in _subsets(setting.zero_delay):
        kets = [local_kets[setting.labels[i]] if i in sub else None for i in range(setting.n)]
        out[sub] = joint_probability(rho, kets, d)
    return out


def full_depth_coefficient(
    labels: Sequence[str],
    targets: SourceEnsemble,
    probes: SourceEnsemble,
    params: ExperimentParams | Sequence[ExperimentParams],
) -> float:
    """Coefficient of rho_kappa(X_n) in the all-party depth term.

    Equals 2^n T^n R^n eta_X n_s,n n_p,n M_X for identical balanced parties.
    """
    n = len(labels)
    return multi_dip_term(frozenset(range(n)), labels, 1.0, targets, probes, params)


class ExtractedProbability(NamedTuple):
    value: float
    flagged: bool


def extract_joint_probability_2q(
    p11: float, p10: float, p01: float, delta00: float, scale: float, stderr: float = 0.0
) -> ExtractedProbability:
    """Recover rho_{k1,k2} from the four measured two-party coincidences.

    The result is flagged (not rejected) when it falls outside
    ``[-3 stderr, 1 + 3 stderr]``.
    """
    if not scale > 0:
        raise ValueError("scale must be > 0")
    value = (p11 - p10 - p01 + delta00) / scale
    eps = 3.0 * stderr
    return ExtractedProbability(value, not (-eps <= value <= 1.0 + eps))


def mobius_depth(coincidences: Mapping[frozenset[int], float], n: int) -> float:
    """All-party depth term from coincidences measured for every subset S.

    Inverts the inclusion-exclusion sum: depth_X = sum_S (-1)^|S| P_kappa(S).
    """
    total = 0.0
    for sub in _subsets(frozenset(range(n))):
        total += (-1) ** len(sub) * coincidences[sub]
    return total


def subsets(s) -> list[frozenset[int]]:
    return list(_subsets(frozenset(s)))
