"""Acceptance checks, one PASS/FAIL line per criterion.

Run standalone with ``python tests/test_acceptance.py`` or under pytest, where
the lines are repeated in the terminal summary.
"""
import dataclasses
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from homqst.config import load_config  # noqa: E402
from homqst.experiment import AcquisitionConfig, Dataset, run_experiment  # noqa: E402
from homqst.hom import (  # noqa: E402
    ExperimentParams,
    MultiSetting,
    coincidence_infinite_delay,
    coincidence_zero_delay,
    dip_depth,
    joint_probabilities_for,
    multi_coincidence,
    solve_overlap_from_visibility,
    visibility_from_ratio,
)
from homqst.quantum import DensityMatrix, build_probe_frame, make_qubit_ket, state_fidelity  # noqa: E402
from homqst.sources import SourceEnsemble, SourceModel  # noqa: E402
from homqst.tomography import mle_reconstruct, reconstruct_2qubit  # noqa: E402

from conftest import random_density  # noqa: E402
from test_hom import _ensemble, _random_model, oracle_coincidence  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "homqst" / "data"
RESULTS: list[str] = []


def report(number: int, ok: bool, detail: str, started: float) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail} ({time.perf_counter() - started:.2f} s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_1_thermal_visibility():
    t0 = time.perf_counter()
    v = visibility_from_ratio(0.0646, 0.211, 2.0, 0.901, 1.0)
    report(1, abs(v - 0.334) <= 1e-3, f"thermal-probe visibility {v:.5f}, want 0.334 +- 0.001", t0)


def test_criterion_2_coherent_visibility():
    t0 = time.perf_counter()
    v = visibility_from_ratio(0.382, 0.191, 1.0, 0.901, 1.0)
    report(2, abs(v - 0.626) <= 1e-3, f"coherent-probe visibility {v:.5f}, want 0.626 +- 0.001", t0)


def test_criterion_3_overlap_inversion():
    t0 = time.perf_counter()
    m = solve_overlap_from_visibility(0.707, zeta=0.694, g2_target=0.211, g2_probe=0.355).mode_overlap
    report(3, abs(m - 0.901) <= 2e-3, f"mode overlap {m:.5f}, want 0.901 +- 0.002", t0)


def test_criterion_4_measured_depth_rates():
    t0 = time.perf_counter()
    want = {"hsps": 0.999, "thermal": 0.995, "coherent": 0.996}
    ok = True
    parts = []
    for name, target in want.items():
        ds = Dataset.from_json((DATA / f"measured-{name}.json").read_text())
        fz = mle_reconstruct(ds, strategy="zero").fidelities["D"]
        fd = mle_reconstruct(ds, strategy="drop").fidelities["D"]
        ok &= abs(fz - target) <= 0.05 and abs(fd - target) <= 0.05 and abs(fz - fd) < 0.01
        parts.append(f"{name} F_D zero {fz:.4f} drop {fd:.4f}")
    report(4, ok, "; ".join(parts) + " (targets 0.999/0.995/0.996 +- 0.05, |zero-drop| < 0.01)", t0)


def test_criterion_5_round_trip_at_measured_scale():
    t0 = time.perf_counter()
    cfg = load_config("paper-hsps-d")
    ds = run_experiment(cfg.rho, cfg.frame, cfg.target, cfg.probe, cfg.params, cfg.acquisition,
                        provenance=cfg.provenance)
    rec = ds.record_map()["D"]
    rate = rec.depth_counts / rec.integration_time / cfg.params.relative("D")
    res = mle_reconstruct(ds, resamples=500, seed=cfg.seed)
    f, err = res.fidelities["D"], res.stderr_fidelities["D"]
    elapsed = time.perf_counter() - t0
    ok = f >= 0.95 and err <= 0.05 and elapsed < 60
    report(5, ok, f"D depth rate {rate:.2f} Hz over {rec.integration_time:g} s, F_D {f:.4f}, "
                  f"MC std {err:.4f} over 500 resamples ({res.mc_failures} failed)", t0)


def _equal_depth_dataset(probe_name: str, rate: float, seconds: float):
    cfg = load_config(f"paper-{probe_name}-d")
    target, probe = cfg.target.sources[0], cfg.probe.sources[0]
    unit = dip_depth(1.0, None, target, probe, dataclasses.replace(cfg.params, eta12=1.0))
    params = dataclasses.replace(cfg.params, eta12=rate / (unit * cfg.acquisition.repetition_rate))
    acq = dataclasses.replace(cfg.acquisition, integration_time=seconds)
    rho = DensityMatrix.from_ket(make_qubit_ket("D"))
    return run_experiment(rho, cfg.frame, cfg.target, cfg.probe, params, acq, provenance=cfg.provenance)


def test_criterion_6_probe_statistics_invariance():
    t0 = time.perf_counter()
    # same depth rate and time for every probe, so the depth statistics match
    est = {name: mle_reconstruct(_equal_depth_dataset(name, 100.0, 30.0)).rho
           for name in ("hsps", "thermal", "coherent")}
    fids = {f"{a}/{b}": state_fidelity(est[a], est[b]) for a, b in itertools.combinations(est, 2)}
    ok = min(fids.values()) >= 0.99 and time.perf_counter() - t0 < 60
    report(6, ok, "100 Hz D depth over 30 s, pairwise fidelity " + ", ".join(f"{k} {v:.6f}" for k, v in fids.items()), t0)


def test_criterion_7_property_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_ratio = worst_lin = worst_dark = 0.0
    for _ in range(1000):
        t = rng.uniform(0.05, 0.95)
        p = ExperimentParams(T=t, R=1 - t, mode_overlap=rng.uniform(0.01, 1.0))
        s = SourceModel("custom", rng.uniform(1e-3, 2), rng.uniform(0, 3))
        pr = SourceModel("custom", rng.uniform(1e-3, 2), rng.uniform(0, 3))
        r1, r2 = rng.uniform(0, 1), rng.uniform(1e-3, 1)
        d1, d2 = dip_depth(r1, None, s, pr, p), dip_depth(r2, None, s, pr, p)
        worst_ratio = max(worst_ratio, abs(d1 / d2 - r1 / r2) / (r1 / r2 if r1 else 1.0))
        lam = rng.uniform(0.1, 3)
        s2 = SourceModel("custom", lam * s.mean_photon, s.g2)
        worst_lin = max(worst_lin, abs(dip_depth(r1, None, s2, pr, p) - lam * d1) / max(lam * d1, 1e-300))
        b = rng.uniform(0, 1)
        dark = (coincidence_infinite_delay(s, pr, p) + b) - (coincidence_zero_delay(r1, s, pr, p) + b)
        worst_dark = max(worst_dark, abs(dark - d1))

    worst_zeta = 0.0
    for _ in range(50):
        g2s, g2p = rng.uniform(0.01, 3, 2)
        zs = math.sqrt(g2s / g2p)
        grid = zs * np.exp(np.linspace(-2, 2, 4001))
        best = grid[np.argmax([visibility_from_ratio(z, g2s, g2p, 1.0) for z in grid])]
        worst_zeta = max(worst_zeta, abs(best / zs - 1))

    worst_sum = 0.0
    frame6 = build_probe_frame(2, 1, "qubit6")
    for _ in range(200):
        rho = random_density(2, rng)
        for basis in (frame6.kets[0:2], frame6.kets[2:4], frame6.kets[4:6]):
            total = sum(np.vdot(k, rho @ k).real for k in basis)
            worst_sum = max(worst_sum, abs(total - 1))

    monotone = True
    for seed in range(20):
        rho = DensityMatrix(random_density(2, np.random.default_rng(seed)))
        cfg = AcquisitionConfig(integration_time=5.0, rng_seed=seed, dark_rate=10.0)
        ds = run_experiment(rho, frame6, SourceModel.heralded(0.05, 0.2), SourceModel.thermal(0.01),
                            ExperimentParams(mode_overlap=0.9, eta12=1e-3), cfg)
        for strategy in ("native", "zero"):
            try:
                res = mle_reconstruct(ds, strategy=strategy, max_iterations=5000)
            except ValueError:
                continue
            monotone &= bool(np.all(np.diff(res.trace) >= 0))

    ok = (worst_ratio < 1e-12 and worst_lin < 1e-12 and worst_dark < 1e-12 and worst_zeta < 1e-3
          and worst_sum < 1e-12 and monotone)
    report(7, ok, f"ratio err {worst_ratio:.1e}, homogeneity err {worst_lin:.1e}, dark err {worst_dark:.1e}, "
                  f"zeta* err {worst_zeta:.1e}, basis sum err {worst_sum:.1e}, MLE monotone {monotone}", t0)


def test_criterion_8_multi_party():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst_red = 0.0
    for _ in range(200):
        s = SourceModel("custom", rng.uniform(0.01, 2), rng.uniform(0, 2))
        pr = SourceModel("custom", rng.uniform(0.01, 2), rng.uniform(0, 2))
        p = ExperimentParams(T=rng.uniform(0.1, 0.9), mode_overlap=rng.uniform(0, 1))
        rho_k = rng.uniform()
        got = multi_coincidence(MultiSetting(1, frozenset({0}), ("H",)), {frozenset({0}): rho_k},
                                SourceEnsemble((s,)), SourceEnsemble((pr,)), p)
        worst_red = max(worst_red, abs(got - coincidence_zero_delay(rho_k, s, pr, p)))

    worst_oracle = 0.0
    local = {lab: make_qubit_ket(lab) for lab in "HVDARL"}
    n_sets = 120
    for _ in range(n_sets):
        rho = DensityMatrix.from_array(random_density(4, rng, rank=int(rng.integers(1, 5))))
        tmodel, pmodel = _random_model(rng, True), _random_model(rng, True)
        T, M, eta = rng.uniform(0.1, 0.9, 2), rng.uniform(0, 1, 2), rng.uniform(0.2, 1, 2)
        plist = [ExperimentParams(T=T[i], mode_overlap=M[i], eta12=eta[i]) for i in range(2)]
        zero = frozenset(i for i in (0, 1) if rng.uniform() < 0.6)
        labels = tuple(str(rng.choice(list("HVDARL"))) if i in zero else None for i in range(2))
        setting = MultiSetting(2, zero, labels)
        got = multi_coincidence(setting, joint_probabilities_for(rho, setting, local, 2),
                                _ensemble(tmodel), _ensemble(pmodel), plist)
        want = oracle_coincidence(zero, labels, rho.elements, tmodel, pmodel, T, M, eta)
        worst_oracle = max(worst_oracle, abs(got - want))

    cfg = load_config("two-qubit-bell")
    ds = run_experiment(cfg.rho, cfg.frame, cfg.target, cfg.probe, cfg.params, cfg.acquisition,
                        provenance=cfg.provenance)
    fid = state_fidelity(reconstruct_2qubit(ds).rho, cfg.rho)
    elapsed = time.perf_counter() - t0
    ok = worst_red <= 1e-15 and worst_oracle < 1e-12 and fid >= 0.99 and elapsed < 120
    report(8, ok, f"n=1 reduction err {worst_red:.1e}, oracle err {worst_oracle:.1e} on {n_sets} sets, "
                  f"Bell round-trip fidelity {fid:.5f}", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
