"""Regenerate the bundled configs and depth fixtures under src/homqst.

Run from the repository root:  python tools/make_fixtures.py
"""
import json
from pathlib import Path

from homqst.config import load_config
from homqst.experiment import depth_dataset, run_experiment
from homqst.hom import ExperimentParams
from homqst.quantum import DensityMatrix, build_probe_frame, make_qubit_ket

ROOT = Path(__file__).resolve().parents[1] / "src" / "homqst"
LABELS = "HVDARL"
REL_EFF = dict(zip(LABELS, (1.0, 1.39, 1.19, 0.77, 1.19, 1.19)))
# white-noise weight per target, so that <k|rho|k> = 1 - w/2 matches the
# projective-measurement fidelities 0.993 0.992 0.983 0.999 0.998 0.995
WHITE = dict(zip(LABELS, (0.014, 0.016, 0.034, 0.002, 0.004, 0.010)))

REP = 250e6
N_S = 0.05
M = 0.901
PROBES = {
    # name: probe kind, zeta, g2 target, g2 probe, normalized D depth rate (Hz), seconds per point
    "hsps": ("heralded_single_photon", 0.694, 0.211, 0.355, 6.1, 30.0),
    "thermal": ("thermal", 0.0646, 0.211, 2.0, 32.2, 30.0),
    "coherent": ("coherent", 0.382, 0.191, 1.0, 391.7, 10.0),
}
DEPTH_ROWS = {
    "hsps": ((2.3, 2.5, 6.1, -0.7, 2.7, 1.9), 30.0),
    "thermal": ((11.5, 14.6, 32.2, -1.9, 13.1, 13.8), 30.0),
    "coherent": ((145.3, 166.3, 391.7, -84.8, 197.7, 129.1), 10.0),
}


def eta12_for(zeta, rate):
    rho_d = 1 - WHITE["D"] / 2
    return rate / (REP * 0.5 * N_S * zeta * N_S * M * rho_d)


def toml_source(kind, mean, g2):
    lines = [f'kind = "{kind}"', f"mean_photon = {mean!r}"]
    if kind in ("heralded_single_photon", "custom"):
        lines.append(f"g2 = {g2!r}")
    return "\n".join(lines)


def single_config(probe, state):
    kind, zeta, g2s, g2p, rate, t = PROBES[probe]
    eff = "\n".join(f"{k} = {v!r}" for k, v in REL_EFF.items())
    return f"""# {probe} probe, {state}-polarized target
# eta12 is tuned so the efficiency-normalized D depth rate of a D target is {rate} Hz

[run]
name = "paper-{probe}-{state.lower()}"
seed = 20240601

[target]
state = "{state}"
d = 2
n = 1
white_noise = {WHITE[state]!r}

[target_source]
{toml_source("heralded_single_photon", N_S, g2s)}

[probe_source]
{toml_source(kind, round(zeta * N_S, 12), g2p)}

[params]
T = 0.5
mode_overlap = {M!r}
eta12 = {eta12_for(zeta, rate)!r}

[params.rel_efficiency]
{eff}

[acquisition]
repetition_rate = {REP!r}
integration_time = {t!r}
dark_rate = 0.01
coherence_time = 10.0
far_delay_factor = 5.0

[frame]
kind = "qubit6"

[tomography]
resamples = 500

[output]
directory = "out"
formats = ["json", "csv"]
"""


TWO_QUBIT = """# two-party demo: Bell state, independent heralded sources on both parties
# integration time gives about 1e6 counts per unit joint probability

[run]
name = "two-qubit-bell"
seed = 7

[target]
state = "PHI+"
d = 2
n = 2

[target_source]
kind = "heralded_single_photon"
mean_photon = 0.05
g2 = 0.05

[probe_source]
kind = "heralded_single_photon"
mean_photon = 0.05
g2 = 0.05

[params]
T = 0.5
mode_overlap = 0.95
eta12 = 0.5

[acquisition]
repetition_rate = 250e6
integration_time = {t!r}
dark_rate = 0.0
coherence_time = 10.0

[frame]
kind = "qubit6"

[tomography]
resamples = 100

[output]
directory = "out"
formats = ["json", "csv"]
"""

IDEAL = """# ideal single photons with a matched probe: unit visibility

[run]
name = "ideal-single-photon"
seed = 1

[target]
state = "D"

[target_source]
kind = "heralded_single_photon"
mean_photon = 0.05
g2 = 0.0

[probe_source]
kind = "heralded_single_photon"
mean_photon = 0.05
g2 = 0.0

[params]
T = 0.5
mode_overlap = 1.0
eta12 = 0.01

[acquisition]
repetition_rate = 250e6
integration_time = 10.0
coherence_time = 10.0

[frame]
kind = "qubit6"
"""


def main():
    cfg_dir = ROOT / "configs"
    data_dir = ROOT / "data"
    cfg_dir.mkdir(exist_ok=True)
    data_dir.mkdir(exist_ok=True)
    for probe in PROBES:
        for state in LABELS:
            (cfg_dir / f"paper-{probe}-{state.lower()}.toml").write_text(single_config(probe, state))
    # 0.95^2 * (2 T R)^2 * eta12^2 * n^4 per pulse for unit probability
    unit = 0.95 ** 2 * 0.5 ** 2 * 0.5 ** 2 * 0.05 ** 4 * 250e6
    (cfg_dir / "two-qubit-bell.toml").write_text(TWO_QUBIT.format(t=round(1e6 / unit, 3)))
    (cfg_dir / "ideal-single-photon.toml").write_text(IDEAL)

    frame = build_probe_frame(2, 1, "qubit6")
    params = ExperimentParams(rel_efficiency=REL_EFF)
    for probe, (row, t) in DEPTH_ROWS.items():
        ds = depth_dataset(frame, dict(zip(LABELS, row)), t, params,
                           provenance={"seed": 0, "config_hash": "", "source": f"measured-{probe}"})
        (data_dir / f"measured-{probe}.json").write_text(ds.to_json())

    # noiseless depth-only fixture: Poisson means of a pure D target
    cfg = load_config(cfg_dir / "paper-hsps-d.toml")
    ds = run_experiment(DensityMatrix.from_ket(make_qubit_ket("D")), cfg.frame, cfg.target, cfg.probe,
                        cfg.params, cfg.acquisition, expected=True, provenance=cfg.provenance)
    depth_only = [type(r)(r.labels, None, (), r.depth_counts, r.integration_time) for r in ds.records]
    ds = ds.replace_records(depth_only)
    ds.kind = "depth"
    (data_dir / "noiseless-d.json").write_text(ds.to_json())
    print(json.dumps(sorted(p.name for p in data_dir.iterdir())))


if __name__ == "__main__":
    main()
