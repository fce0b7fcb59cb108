"""Photon statistics of target and probe light.

Only mean photon numbers and normally ordered intensity correlations enter
the dip model, so a source is fully described by ``mean_photon`` and its
``g^(n)`` values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

SOURCE_KINDS = ("heralded_single_photon", "thermal", "coherent", "custom")
ENSEMBLE_RULES = ("independent_product", "partitioned_thermal")


@dataclass(frozen=True)
class SourceModel:
    kind: str
    mean_photon: float
    g2: float | None = None
    gn_table: Mapping[int, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not (self.mean_photon >= 0 and math.isfinite(self.mean_photon)):
            raise ValueError("mean_photon must be finite and >= 0")
        fixed = {"coherent": 1.0, "thermal": 2.0}.get(self.kind)
        if fixed is not None:
            if self.g2 is not None and self.g2 != fixed:
                raise ValueError(f"{self.kind} light has g2 = {fixed}, got {self.g2}")
            object.__setattr__(self, "g2", fixed)
        elif self.g2 is None or not self.g2 >= 0:
            raise ValueError(f"{self.kind} source needs g2 >= 0")
        object.__setattr__(self, "g2", float(self.g2))
        if self.gn_table is not None:
            object.__setattr__(self, "gn_table", {int(k): float(v) for k, v in self.gn_table.items()})

    @classmethod
    def coherent(cls, mean_photon: float) -> "SourceModel":
        return cls("coherent", mean_photon)

    @classmethod
    def thermal(cls, mean_photon: float) -> "SourceModel":
        return cls("thermal", mean_photon)

    @classmethod
    def heralded(cls, mean_photon: float, g2: float) -> "SourceModel":
        return cls("heralded_single_photon", mean_photon, g2)

    def to_json_dict(self) -> dict:
        out = {"kind": self.kind, "mean_photon": self.mean_photon, "g2": self.g2}
        if self.gn_table:
            out["gn_table"] = {str(k): v for k, v in sorted(self.gn_table.items())}
        return out

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "SourceModel":
        table = data.get("gn_table")
        return cls(
            kind=data["kind"],
            mean_photon=float(data["mean_photon"]),
            g2=None if data.get("g2") is None else float(data["g2"]),
            gn_table=None if table is None else {int(k): float(v) for k, v in table.items()},
        )


def g_n(source: SourceModel, order: int) -> float:
    """Normally ordered n-th order intensity correlation ``g^(n)``.

    Orders above 2 are 1 for coherent light and ``n!`` for thermal light;
    other sources must list them in ``gn_table``.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if order <= 1:
        return 1.0
    if order == 2:
        return source.g2
    if source.gn_table and order in source.gn_table:
        return source.gn_table[order]
    if source.kind == "coherent":
        return 1.0
    if source.kind == "thermal":
        return float(math.factorial(order))
    raise ValueError(f"g^({order}) is undefined for {source.kind} source without a gn_table entry")


@dataclass(frozen=True)
class SourceEnsemble:
    """Per-party sources of an n-partite setup and how they correlate.

    ``independent_product`` treats parties as statistically independent;
    ``partitioned_thermal`` splits a single thermal mode over all parties.
    """

    sources: tuple[SourceModel, ...]
    rule: str = "independent_product"

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        if not self.sources:
            raise ValueError("ensemble needs at least one source")
        if self.rule not in ENSEMBLE_RULES:
            raise ValueError(f"unknown cross-correlation rule {self.rule!r}")
        if self.rule == "partitioned_thermal" and any(s.kind != "thermal" for s in self.sources):
            raise ValueError("partitioned_thermal requires every party to be thermal")

    @classmethod
    def replicate(cls, source: SourceModel, n: int, rule: str = "independent_product") -> "SourceEnsemble":
        return cls(tuple([source] * n), rule)

    @property
    def n(self) -> int:
        return len(self.sources)

    def moment(self, powers: Sequence[int]) -> float:
        """Normally ordered moment <: prod_i N_i**a_i :> of the party intensities."""
        if len(powers) != self.n:
            raise ValueError("one power per party required")
        prod = 1.0
        for a, s in zip(powers, self.sources):
            prod *= s.mean_photon ** a
        if self.rule == "partitioned_thermal":
            return math.factorial(sum(powers)) * prod
        for a, s in zip(powers, self.sources):
            prod *= g_n(s, a)
        return prod

    def to_json_dict(self) -> dict:
        return {"rule": self.rule, "sources": [s.to_json_dict() for s in self.sources]}


ProbeEnsemble = SourceEnsemble


def cross_g_n(ensemble: SourceEnsemble) -> float:
    """n-th order cross-correlation across all parties of the ensemble."""
    if ensemble.rule == "partitioned_thermal":
        return float(math.factorial(ensemble.n))
    return 1.0
