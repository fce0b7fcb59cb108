import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homqst.experiment import (
    AcquisitionConfig,
    Dataset,
    MeasurementRecord,
    depth_dataset,
    dip_profile,
    dip_scan,
    dip_scan_csv,
    expected_counts,
    multi_settings,
    record_rng,
    run_experiment,
    sample_counts,
    three_point_measurement,
)
from homqst.hom import ExperimentParams, dip_depth
from homqst.quantum import DensityMatrix, build_probe_frame, make_qubit_ket, named_state
from homqst.sources import SourceModel

from conftest import MEASURED_EFF

TARGET = SourceModel.heralded(0.05, 0.211)
PROBE = SourceModel.heralded(0.0347, 0.355)
RHO_D = DensityMatrix.from_ket(make_qubit_ket("D"))


def test_sampling_examples():
    cfg = AcquisitionConfig(repetition_rate=1e6, integration_time=1.0)
    assert sample_counts(0.0, cfg, np.random.default_rng(0)) == 0
    draws = [sample_counts(1.0, cfg, record_rng(0, i)) for i in range(20)]
    assert all(abs(c - 1e6) < 5 * 1e3 for c in draws)
    with pytest.raises(OverflowError):
        expected_counts(1.0, AcquisitionConfig(repetition_rate=1e12, integration_time=1e4))


def test_zero_integration_time():
    cfg = AcquisitionConfig(integration_time=0.0, dark_rate=100.0)
    assert sample_counts(0.3, cfg, np.random.default_rng(1)) == 0


def test_acquisition_validation():
    with pytest.raises(ValueError):
        AcquisitionConfig(integration_time=-1)
    with pytest.raises(ValueError):
        AcquisitionConfig(far_delay_factor=3)
    cfg = AcquisitionConfig(coherence_time=4.0)
    assert cfg.far_delays == (-20.0, 20.0)
    assert len(cfg.delay_grid) == 81 and cfg.delay_grid[0] == -40.0
    assert AcquisitionConfig.from_json_dict(json.loads(json.dumps(cfg.to_json_dict()))) == cfg


def test_dip_profile():
    assert dip_profile(0.2, 1.0, 0.0, 10.0) == pytest.approx(0.8)
    assert dip_profile(0.2, 1.0, math.inf, 10.0) == 1.0
    assert dip_profile(0.2, 1.0, 50.0, 10.0) == pytest.approx(1.0, abs=1e-10)


def test_far_points_cancel_linear_tilt():
    cfg = AcquisitionConfig(misalignment_drift=1e-3, coherence_time=10.0)
    rec = three_point_measurement(RHO_D, "D", build_probe_frame(2, 1, "qubit6"), TARGET, PROBE,
                                  ExperimentParams(), cfg, expected=True)
    want = expected_counts(dip_depth(1.0, "D", TARGET, PROBE, ExperimentParams()), cfg) - cfg.dark_rate
    assert rec.depth_counts == pytest.approx(want, rel=1e-9)


def test_three_point_determinism():
    frame = build_probe_frame(2, 1, "qubit6")
    cfg = AcquisitionConfig(integration_time=30.0, rng_seed=9)
    a = run_experiment(RHO_D, frame, TARGET, PROBE, ExperimentParams(eta12=1e-3), cfg)
    b = run_experiment(RHO_D, frame, TARGET, PROBE, ExperimentParams(eta12=1e-3), cfg)
    assert a.to_json() == b.to_json()
    c = run_experiment(RHO_D, frame, TARGET, PROBE, ExperimentParams(eta12=1e-3),
                       AcquisitionConfig(integration_time=30.0, rng_seed=10))
    assert [r.c_zero for r in a.records] != [r.c_zero for r in c.records]


def test_rng_required_unless_expected():
    with pytest.raises(ValueError):
        three_point_measurement(RHO_D, "D", build_probe_frame(2, 1, "qubit6"), TARGET, PROBE,
                                ExperimentParams(), AcquisitionConfig())


def test_mean_depth_matches_model():
    frame = build_probe_frame(2, 1, "qubit6")
    params = ExperimentParams(eta12=1e-4)
    cfg_kw = dict(integration_time=10.0, dark_rate=50.0)
    want = dip_depth(1.0, "D", TARGET, PROBE, params) * 250e6 * 10.0
    means = AcquisitionConfig(**cfg_kw)
    rec = three_point_measurement(RHO_D, "D", frame, TARGET, PROBE, params, means, expected=True)
    var = rec.c_zero + sum(rec.c_far) / 4
    depths = []
    for seed in range(100):
        cfg = AcquisitionConfig(rng_seed=seed, **cfg_kw)
        r = three_point_measurement(RHO_D, "D", frame, TARGET, PROBE, params, cfg, record_rng(seed, 0))
        depths.append(r.depth_counts)
    assert abs(np.mean(depths) - want) < 3 * math.sqrt(var / 100)


@given(st.floats(0, 1e4))
def test_dark_counts_leave_expected_depth(dark):
    frame = build_probe_frame(2, 1, "qubit6")
    params = ExperimentParams(eta12=1e-3)
    base = three_point_measurement(RHO_D, "H", frame, TARGET, PROBE, params, AcquisitionConfig(), expected=True)
    noisy = three_point_measurement(RHO_D, "H", frame, TARGET, PROBE, params,
                                    AcquisitionConfig(dark_rate=dark), expected=True)
    assert noisy.depth_counts == pytest.approx(base.depth_counts, rel=1e-9, abs=1e-6)


def test_multi_settings_counts():
    f4 = build_probe_frame(2, 2, "qubit4")
    settings = multi_settings(f4)
    assert len(settings) == 25
    assert sum(len(s.zero_delay) == 2 for s in settings) == 16
    assert settings[-1].zero_delay == frozenset()
    assert len(multi_settings(build_probe_frame(2, 2, "qubit6"))) == 49


def test_multi_party_dataset():
    f4 = build_probe_frame(2, 2, "qubit4")
    rho = DensityMatrix.from_ket(named_state("PHI+", 2, 2))
    ds = run_experiment(rho, f4, TARGET, PROBE, ExperimentParams(), AcquisitionConfig(integration_time=1e-3))
    assert ds.kind == "multi" and len(ds.records) == 25
    assert all(r.depth_counts is None and not r.c_far for r in ds.records)
    with pytest.raises(ValueError):
        run_experiment(RHO_D, f4, TARGET, PROBE, ExperimentParams(), AcquisitionConfig())


def test_record_validation():
    with pytest.raises(ValueError):
        MeasurementRecord(("H",), -1.0, (1.0, 1.0))
    r = MeasurementRecord(("H",), 10.0, (14.0, 18.0))
    assert r.depth_counts == 6.0
    assert MeasurementRecord((None, "D"), 3.0).setting == "-,D"


def test_json_and_csv_round_trip():
    frame = build_probe_frame(2, 1, "qubit6")
    params = ExperimentParams(rel_efficiency=MEASURED_EFF, eta12=1e-3)
    ds = run_experiment(RHO_D, frame, TARGET, PROBE, params, AcquisitionConfig(integration_time=2.0),
                        provenance={"config_hash": "abc123"})
    back = Dataset.from_json(ds.to_json())
    assert back.to_json() == ds.to_json()
    assert back.acquisition == ds.acquisition
    text = ds.to_csv()
    first, rest = text.split("\n", 1)
    assert first == "# config_hash: abc123"
    rows = list(csv.DictReader(io.StringIO(rest)))
    assert [r["setting"] for r in rows] == list("HVDARL")
    for row, rec in zip(rows, ds.records):
        assert float(row["c_zero"]) == rec.c_zero
        assert float(row["depth"]) == pytest.approx(rec.depth_counts)


def test_unknown_kind():
    with pytest.raises(ValueError):
        Dataset(build_probe_frame(2, 1, "qubit6"), [], kind="other")


def test_depth_dataset_normalization():
    frame = build_probe_frame(2, 1, "qubit6")
    ds = depth_dataset(frame, dict(zip("HVDARL", (1.0,) * 6)), 2.0, ExperimentParams(rel_efficiency=MEASURED_EFF))
    assert not ds.has_raw_counts
    assert [r.depth_counts for r in ds.records] == pytest.approx([2 * MEASURED_EFF[k] for k in "HVDARL"])


def test_dip_scan():
    frame = build_probe_frame(2, 1, "qubit6")
    cfg = AcquisitionConfig(integration_time=1.0)
    params = ExperimentParams(eta12=1e-3)
    rows = dip_scan(RHO_D, "D", frame, TARGET, PROBE, params, cfg)
    assert len(rows) == 81
    ps = [p for _, p, _ in rows]
    assert int(np.argmin(ps)) == 40
    assert rows == dip_scan(RHO_D, "D", frame, TARGET, PROBE, params, cfg)
    text = dip_scan_csv(rows, "h")
    assert text.startswith("# config_hash: h\ndelay_ps,expected_probability,sampled_counts\n")
