import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import homqst
from homqst.experiment import AcquisitionConfig, Dataset, depth_dataset, run_experiment
from homqst.hom import ExperimentParams
from homqst.quantum import DensityMatrix, build_probe_frame, make_qubit_ket, named_state, state_fidelity
from homqst.sources import SourceModel
from homqst.tomography import (
    DepthVector,
    conventional_qst,
    default_strategy,
    estimate_scale,
    fidelity_errors,
    handle_negatives,
    linear_inversion,
    mle_reconstruct,
    normalize_depths,
    reconstruct_2qubit,
)

from conftest import MEASURED_EFF, random_density

DATA = Path(homqst.__file__).parent / "data"
LABELS = "HVDARL"
TARGET = SourceModel.heralded(0.05, 0.211)
PROBE = SourceModel.heralded(0.0347, 0.355)


def load(name):
    return Dataset.from_json((DATA / f"{name}.json").read_text())


def pure(label):
    return DensityMatrix.from_ket(make_qubit_ket(label))


def hom_dataset(rho, t=30.0, seed=0, expected=False, eta12=3e-5, eff=MEASURED_EFF):
    frame = build_probe_frame(2, 1, "qubit6")
    params = ExperimentParams(rel_efficiency=eff, mode_overlap=0.901, eta12=eta12)
    cfg = AcquisitionConfig(integration_time=t, rng_seed=seed, dark_rate=0.01)
    return run_experiment(rho, frame, TARGET, PROBE, params, cfg, expected=expected)


def test_normalize_reproduces_rates():
    d = normalize_depths(load("measured-hsps"))
    assert d.values / 30 == pytest.approx([2.3, 2.5, 6.1, -0.7, 2.7, 1.9])
    assert d.flags[3] == "negative"


def test_normalize_with_explicit_efficiencies():
    ds = load("measured-thermal")
    ones = {k: 1.0 for k in LABELS}
    raw = normalize_depths(ds, ones).values
    assert raw == pytest.approx(normalize_depths(ds).values * np.array([MEASURED_EFF[k] for k in LABELS]))


def test_negative_handling():
    d = normalize_depths(load("measured-hsps"))
    frame = build_probe_frame(2, 1, "qubit6")
    dropped = handle_negatives(d, "drop", frame)
    assert dropped.included.sum() == 5
    zeroed = handle_negatives(d, "zero", frame)
    assert zeroed.values[3] == 0.0 and zeroed.included.all()
    with pytest.raises(ValueError):
        handle_negatives(d, "clip")


def test_drop_rank_failure():
    frame = build_probe_frame(2, 1, "qubit4")
    d = DepthVector(tuple(frame.labels), np.array([1.0, -0.1, 0.5, 0.5]), ("ok", "negative", "ok", "ok"))
    with pytest.raises(ValueError):
        handle_negatives(d, "drop", frame)


def test_scale_from_computational_basis():
    d = normalize_depths(load("measured-hsps"))
    assert estimate_scale(d, build_probe_frame(2, 1, "qubit6")) == pytest.approx((2.3 + 2.5) * 30)


def test_linear_inversion_exact():
    frame = build_probe_frame(2, 1, "qubit6")
    rng = np.random.default_rng(8)
    rho = random_density(2, rng)
    p = np.einsum("ki,ij,kj->k", frame.kets.conj(), rho, frame.kets).real
    d = DepthVector(tuple(frame.labels), 37.0 * p, ("ok",) * 6)
    assert np.abs(linear_inversion(d, frame) - rho).max() < 1e-12


def test_linear_inversion_can_be_unphysical():
    ds = load("measured-hsps")
    lin = linear_inversion(normalize_depths(ds), ds.frame)
    k = make_qubit_ket("D").amplitudes
    assert np.vdot(k, lin @ k).real == pytest.approx(1.19, abs=5e-3)
    assert np.linalg.eigvalsh(lin).min() < 0


@pytest.mark.parametrize("name", ["measured-hsps", "measured-thermal", "measured-coherent"])
def test_measured_rows_give_high_d_fidelity(name):
    ds = load(name)
    for strat in ("zero", "drop"):
        res = mle_reconstruct(ds, strategy=strat)
        assert res.converged
        assert res.fidelities["D"] > 0.98
        assert np.linalg.eigvalsh(res.rho.elements).min() > -1e-12


@pytest.mark.parametrize("label", list(LABELS))
@pytest.mark.parametrize("strategy", ["zero", "drop"])
def test_noiseless_recovery(label, strategy):
    res = mle_reconstruct(hom_dataset(pure(label), expected=True), strategy=strategy, tol=1e-14)
    assert res.fidelities[label] >= 1 - 1e-8


def test_noiseless_depth_fixture():
    res = mle_reconstruct(load("noiseless-d"))
    assert res.fidelities["D"] >= 1 - 1e-8


@pytest.mark.parametrize("label", list(LABELS))
def test_native_noiseless_recovery(label):
    res = mle_reconstruct(hom_dataset(pure(label), expected=True), strategy="native")
    assert res.strategy == "native"
    assert res.fidelities[label] >= 1 - 1e-8


def test_scale_invariance():
    frame = build_probe_frame(2, 1, "qubit6")
    rates = dict(zip(LABELS, (2.3, 2.5, 6.1, 0.4, 2.7, 1.9)))
    a = mle_reconstruct(depth_dataset(frame, rates, 30.0), tol=1e-14)
    b = mle_reconstruct(depth_dataset(frame, {k: 1e3 * v for k, v in rates.items()}, 30.0), tol=1e-14)
    assert np.abs(a.rho.elements - b.rho.elements).max() < 1e-10


@settings(max_examples=25)
@given(st.integers(0, 2 ** 31), st.sampled_from(["zero", "drop", "native"]))
def test_result_is_physical(seed, strategy):
    rng = np.random.default_rng(seed)
    ds = hom_dataset(DensityMatrix(random_density(2, rng)), t=float(rng.uniform(0.5, 30)), seed=seed)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = mle_reconstruct(ds, strategy=strategy, max_iterations=5000)
    except ValueError:
        return  # too many settings dropped to fix the state
    ev = np.linalg.eigvalsh(res.rho.elements)
    assert ev.min() >= -1e-12
    assert np.trace(res.rho.elements).real == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(res.trace) >= 0)


def test_default_strategy():
    assert default_strategy(hom_dataset(pure("D"), expected=True)) == "native"
    assert default_strategy(load("measured-hsps")) == "drop"
    with pytest.raises(ValueError):
        mle_reconstruct(load("measured-hsps"), strategy="clip")


def test_monte_carlo_without_noise_is_zero():
    ds = hom_dataset(pure("D"))
    mc = fidelity_errors(ds, 5, noise=False)
    # identical resamples: spread is pure roundoff in the mean
    assert all(v < 1e-12 for v in mc.stderr.values())
    assert mc.failures == 0


def test_monte_carlo_needs_raw_counts():
    with pytest.raises(ValueError):
        fidelity_errors(load("measured-hsps"), 10)


def test_monte_carlo_worker_independent():
    ds = hom_dataset(pure("D"))
    a = fidelity_errors(ds, 8, seed=3)
    b = fidelity_errors(ds, 8, seed=3, workers=2)
    assert np.array_equal(a.samples, b.samples)


def test_stderr_scales_with_counts():
    ds1 = hom_dataset(pure("D"), t=30.0, seed=1)
    ds16 = hom_dataset(pure("D"), t=480.0, seed=1)
    s1 = fidelity_errors(ds1, 200, seed=1).stderr["H"]
    s16 = fidelity_errors(ds16, 200, seed=1).stderr["H"]
    # sixteen times the counts: a quarter of the spread
    assert s1 / s16 == pytest.approx(4.0, rel=0.3)


def test_resamples_attach_stderr():
    res = mle_reconstruct(hom_dataset(pure("D")), resamples=20, seed=2)
    assert set(res.stderr_fidelities) == set(LABELS)
    assert "stderr" in res.table()


def test_conventional_qst():
    frame = build_probe_frame(2, 1, "qubit6")
    res = conventional_qst(pure("D"), frame, 1e6, seed=1)
    assert res.fidelities["D"] > 0.999
    assert np.all(np.diff(res.trace) >= 0)
    rho = DensityMatrix(random_density(2, np.random.default_rng(4)))
    res = conventional_qst(rho, frame, 1e7, seed=4)
    assert state_fidelity(res.rho, rho) > 0.999
    with pytest.raises(ValueError):
        conventional_qst(rho, frame, 0.0)


def two_qubit_dataset(state="PHI+", expected=True, frame="qubit4", pairs=1e6, seed=0):
    f = build_probe_frame(2, 2, frame)
    src = SourceModel.heralded(0.05, 0.05)
    params = ExperimentParams(mode_overlap=0.95, eta12=0.5)
    unit = 0.95 ** 2 * 0.5 ** 2 * 0.5 ** 2 * 0.05 ** 4 * 250e6
    cfg = AcquisitionConfig(integration_time=pairs / unit, rng_seed=seed)
    rho = DensityMatrix.from_ket(named_state(state, 2, 2))
    return rho, run_experiment(rho, f, src, src, params, cfg, expected=expected)


@pytest.mark.parametrize("state", ["PHI+", "HH", "D,R"])
def test_two_qubit_noiseless(state):
    rho, ds = two_qubit_dataset(state)
    res = reconstruct_2qubit(ds, tol=1e-14)
    assert res.strategy == "zero"
    assert state_fidelity(res.rho, rho) >= 1 - 1e-8


def test_two_qubit_extraction():
    rho, ds = two_qubit_dataset("PHI+")
    res = reconstruct_2qubit(ds)
    assert res.extracted["H,H"][0] == pytest.approx(0.5, abs=1e-9)
    assert res.extracted["H,V"][0] == pytest.approx(0.0, abs=1e-9)
    assert not any(flag for _, flag in res.extracted.values())


def test_two_qubit_sampled():
    rho, ds = two_qubit_dataset("PHI+", expected=False, frame="qubit6", seed=5)
    res = reconstruct_2qubit(ds)
    assert state_fidelity(res.rho, rho) > 0.99


def test_two_qubit_requires_multi():
    with pytest.raises(ValueError):
        reconstruct_2qubit(load("measured-hsps"))
