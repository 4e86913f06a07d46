"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line and enforcing its runtime budget (`pytest -s` shows the lines
live)."""

import hashlib
import itertools
import time
from contextlib import contextmanager

import numpy as np
import pytest

from acta.geo import Trajectory, max_path_deviation
from acta.learner import Dataset, evaluate, loss_and_grad, train
from acta.netmetrics import (
    clustering_coefficient,
    char_path_length,
    greedy_partition,
    modularity,
)
from acta.pipeline import BatteryState, SensorAgent, emit
from acta.protocol import (
    AttentionLabel,
    CaseCPolicy,
    FeedbackKind,
    LocationClass,
    Rationale,
    decide_feedback,
)
from acta.replay import replay
from acta.runner import run_phase1, run_phase2
from acta.scenario import load_scenario, validate_profile
from acta.sessionlog import SessionLogReader

from .conftest import meridian_path, point_north, scenario_yaml
from .test_eeg import dft_band_power_oracle
from .test_geo import dense_deviation_oracle
from .test_netmetrics import (
    clustering_brute_force,
    exhaustive_best_q,
    floyd_warshall_path_length,
    graph_from_edges,
    random_graph,
    two_triangles,
)
from .test_scenario import ELIGIBILITY_TABLE, profile


@contextmanager
def criterion(name, budget_s=None):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL ({time.perf_counter() - t0:.1f}s)")
        raise
    elapsed = time.perf_counter() - t0
    if budget_s is not None and elapsed >= budget_s:
        print(f"\nACCEPTANCE {name}: FAIL (runtime {elapsed:.1f}s >= budget {budget_s}s)")
        raise AssertionError(f"{name}: runtime budget exceeded")
    print(f"\nACCEPTANCE {name}: PASS ({elapsed:.1f}s)")


# ----------------------------------------------------------------- 1 battery

def test_acceptance_battery_figure():
    with criterion("battery-exhaustion-3.33h", budget_s=1.0):
        battery = BatteryState(capacity_mah=100.0, load_profile={"gps": 30.0})
        agent = SensorAgent(
            "gps0", "gps", 1.0, lambda t: (45.0, 9.0),
            battery=battery, active_loads=("gps",), end_time_s=1e9,
        )
        now = 0.0
        while agent.exhausted_at is None:
            now += 60.0
            emit(agent, now)
        hours = agent.exhausted_at / 3600.0
        assert hours == pytest.approx(100.0 / 30.0, abs=0.01)


# ----------------------------------------------------------------- 2 protocol

def _delivery_checks(log_path, phase, n_landmarks):
    reader = SessionLogReader(log_path)
    sessions = reader.sessions()
    for k, records in sessions.items():
        events = [f for n, f in records if n == "event"]
        nudges = [e for e in events if e["kind"] == "nudge"]
        nfb = [e for e in events if e["kind"] in ("nfb_encourage", "nfb_reinforce")]
        if k == 1:
            lm_nudged = sorted({e["place"] for e in nudges})
            assert lm_nudged == [f"lm{i}" for i in range(1, n_landmarks + 1)], (
                f"session 1 must nudge every landmark, got {lm_nudged}"
            )
        if k == max(sessions):
            assert not nudges, "final session must deliver zero nudges"
        if phase == "phase1":
            assert not nfb, "phase 1 must never deliver NFB"
        by_place = {}
        for e in events:
            if e["kind"] != "noop":
                by_place.setdefault(e["place"], []).append(e["kind"])
        for place, kinds in by_place.items():
            assert len(kinds) == 1, f"{place} got multiple stimuli {kinds}"
            if kinds[0] in ("nfb_encourage", "nfb_reinforce"):
                assert "nudge" not in kinds


def _protocol_yaml(**kw):
    return scenario_yaml(
        length_m=120.0,
        landmarks=(30.0, 60.0, 90.0),
        non_relevant=(45.0, 75.0),
        radius_m=8.0,
        nr_radius_m=6.0,
        eeg_batch=20,
        **kw,
    )


def test_acceptance_protocol_delivery_suite(tmp_path):
    with criterion("protocol-delivery-200-runs", budget_s=60.0):
        base = load_scenario(_protocol_yaml())
        seed_result = run_phase1(base, out_path=str(tmp_path / "seed.log"))
        model = train(seed_result.dataset)

        runs = 0
        for i in range(50):
            for phase, n_sessions in (("phase1", 2), ("phase1", 3), ("phase2", 2),
                                      ("phase2", 3)):
                seeds = {name: 1000 * i + j for j, name in enumerate(
                    ("walker", "eeg", "protocol", "link_sensor", "link_cloud",
                     "physio", "metrics"))}
                sc = load_scenario(_protocol_yaml(phase=phase, n_sessions=n_sessions,
                                                  seeds=seeds))
                out = str(tmp_path / f"run{i}_{phase}_{n_sessions}.log")
                if phase == "phase1":
                    run_phase1(sc, out_path=out)
                else:
                    run_phase2(sc, model, out_path=out)
                _delivery_checks(out, phase, n_landmarks=3)
                runs += 1
        assert runs == 200

        # full 3x2x2 table, default case-(c) no-op
        for loc, label, fired in itertools.product(LocationClass, AttentionLabel,
                                                   (False, True)):
            kind, rationale = decide_feedback(loc, label, fired, CaseCPolicy.NOOP)
            if fired:
                assert kind is FeedbackKind.NOOP
            elif loc is LocationClass.LANDMARK and label is AttentionLabel.ATTENTION:
                assert kind is FeedbackKind.NFB_ENCOURAGE and rationale is Rationale.CASE_A
            elif loc is LocationClass.NON_RELEVANT and label is AttentionLabel.NON_ATTENTION:
                assert kind is FeedbackKind.NFB_REINFORCE and rationale is Rationale.CASE_B
            elif loc is LocationClass.NEITHER:
                assert kind is FeedbackKind.NOOP
            else:
                assert kind is FeedbackKind.NOOP
                assert rationale is Rationale.CASE_C_NO_INTERVENTION


# ----------------------------------------------------------------- 3 efficacy

def _efficacy_yaml(phase, seeds=None, d_theta=0.5, d_alpha=0.5, n_sessions=2):
    return scenario_yaml(
        phase=phase,
        n_sessions=n_sessions,
        length_m=400.0,
        landmarks=(80.0, 160.0, 240.0, 320.0),
        non_relevant=(120.0, 200.0),
        radius_m=20.0,
        nr_radius_m=15.0,
        speed=1.2,
        channels=("Fp1", "Fp2", "C3", "C4", "P3", "P4", "O1", "O2"),
        fs=250.0,
        eeg_batch=25,
        d_theta=d_theta,
        d_alpha=d_alpha,
        seeds=seeds,
    )


def _split_eval(dataset, train_frac=0.7):
    cut = int(len(dataset) * train_frac)
    tr = Dataset(dataset.participant_id, dataset.feature_names,
                 records=list(dataset.records[:cut]))
    te = Dataset(dataset.participant_id, dataset.feature_names,
                 records=list(dataset.records[cut:]))
    model = train(tr)
    return model, evaluate(model, te)


def test_acceptance_closed_loop_efficacy(tmp_path):
    with criterion("closed-loop-efficacy", budget_s=300.0):
        # informative EEG: train on phase 1, >= 90% held-out accuracy
        sc1 = load_scenario(_efficacy_yaml("phase1"))
        r1 = run_phase1(sc1, out_path=str(tmp_path / "eff1.log"))
        model, held_out = _split_eval(r1.dataset)
        assert held_out.accuracy >= 0.90, f"held-out accuracy {held_out.accuracy:.3f}"

        # phase 2 final sessions: >= 95% of landmark encounters encouraged
        encounters = encouraged = 0
        for i in range(5):
            seeds = {name: 7000 + 31 * i + j for j, name in enumerate(
                ("walker", "eeg", "protocol", "link_sensor", "link_cloud",
                 "physio", "metrics"))}
            sc2 = load_scenario(_efficacy_yaml("phase2", seeds=seeds))
            r2 = run_phase2(sc2, model, out_path=str(tmp_path / f"eff2_{i}.log"))
            reader = SessionLogReader(r2.log_path)
            sessions = reader.sessions()
            final = sessions[max(sessions)]
            events = [f for n, f in final if n == "event"]
            lm_events = [e for e in events if e["place"].startswith("lm")]
            encounters += len(lm_events)
            encouraged += sum(1 for e in lm_events if e["kind"] == "nfb_encourage")
        assert encounters == 20
        assert encouraged / encounters >= 0.95, (
            f"only {encouraged}/{encounters} landmark encounters encouraged"
        )

        # uninformative EEG: held-out accuracy at chance (50% +/- 10%)
        sc0 = load_scenario(_efficacy_yaml("phase1", d_theta=0.0, d_alpha=0.0))
        r0 = run_phase1(sc0, out_path=str(tmp_path / "eff0.log"))
        _, chance = _split_eval(r0.dataset)
        assert chance.accuracy == pytest.approx(0.5, abs=0.1), (
            f"chance accuracy {chance.accuracy:.3f}"
        )


# ----------------------------------------------------------------- 4 oracles

def test_acceptance_oracle_equivalence(rng):
    with criterion("oracle-equivalence", budget_s=120.0):
        # max_path_deviation vs dense resampling, 100 random cases
        path = meridian_path(length_m=300.0, n_vertices=7)
        origin = path.polyline[0]
        for case in range(100):
            samples = []
            for i in range(50):
                arc = rng.uniform(0, 300.0)
                lateral = rng.uniform(-25.0, 25.0)
                samples.append((float(i), point_north(origin, arc, meters_east=lateral)))
            traj = Trajectory(tuple(samples))
            got = max_path_deviation(traj, path)
            want = dense_deviation_oracle(traj, path)
            assert got == pytest.approx(want, abs=0.05)

        # clustering / path length vs brute force, exact, 100 random 8-node graphs
        for _ in range(100):
            g = random_graph(rng)
            assert clustering_coefficient(g) == pytest.approx(
                clustering_brute_force(g), abs=1e-12
            )
            got_l = char_path_length(g)
            want_l, connected = floyd_warshall_path_length(g)
            assert got_l.value == pytest.approx(want_l, abs=1e-12)
            assert got_l.connected == connected

        # greedy modularity <= exhaustive optimum; equals 0.5 on two triangles
        tt = two_triangles()
        assert modularity(tt, greedy_partition(tt)) == pytest.approx(0.5)
        assert exhaustive_best_q(tt) == pytest.approx(0.5)
        for seed in range(20):
            r = np.random.default_rng(seed)
            g = random_graph(r, n=6, p=0.4)
            if g.n_edges == 0:
                continue
            assert modularity(g, greedy_partition(g)) <= exhaustive_best_q(g) + 1e-9

        # band power vs direct-summation DFT (1%) and Parseval (1e-6 relative)
        from acta.eeg import Band, EegWindow, band_power, spectrum_power

        fs, n = 250.0, 500
        t = np.arange(n) / fs
        tone = np.sin(2 * np.pi * 10.0 * t)
        w = EegWindow(0.0, fs, np.atleast_2d(tone))
        got = band_power(w, Band("alpha", 8.0, 13.0))[0]
        assert got == pytest.approx(dft_band_power_oracle(tone, fs, 8.0, 13.0), rel=0.01)
        x = rng.normal(0, 10, (4, n))
        parts = [(0.0, 20.0), (20.0, 60.0), (60.0, 125.0)]
        total = sum(spectrum_power(x, fs, lo, hi) for lo, hi in parts)
        np.testing.assert_allclose(total, np.mean((x * np.hanning(n)) ** 2, axis=1),
                                   rtol=1e-6)

        # classifier gradient vs central differences (1e-5 relative)
        xg = rng.normal(0, 1, (40, 5))
        yg = rng.integers(0, 2, 40).astype(float)
        sw = np.where(yg == 1.0, 1.1, 0.9)
        eps = 1e-6
        for _ in range(10):
            wts = rng.normal(0, 1, 5)
            b = float(rng.normal())
            _, gw, gb = loss_and_grad(wts, b, xg, yg, sw, 1e-3)
            for k in range(5):
                wp, wm = wts.copy(), wts.copy()
                wp[k] += eps
                wm[k] -= eps
                fd = (loss_and_grad(wp, b, xg, yg, sw, 1e-3)[0]
                      - loss_and_grad(wm, b, xg, yg, sw, 1e-3)[0]) / (2 * eps)
                assert gw[k] == pytest.approx(fd, rel=1e-5, abs=1e-10)


# ----------------------------------------------------------------- 5 pipeline

def test_acceptance_pipeline_conservation_determinism(tmp_path):
    with criterion("pipeline-conservation-determinism", budget_s=120.0):
        for loss in (0.0, 0.1, 0.5):
            sc = load_scenario(scenario_yaml(loss=loss))
            result = run_phase1(sc, out_path=str(tmp_path / f"cons{loss}.log"))
            reader = SessionLogReader(result.log_path)
            rows = reader.select("telemetry")
            assert rows
            for row in rows:
                assert (
                    int(row["stored"]) + int(row["link_dropped"])
                    + int(row["late_dropped"]) + int(row["cloud_dropped"])
                    == int(row["emitted"])
                ), row
            if loss == 0.0:
                assert all(int(r["stored"]) == int(r["emitted"]) for r in rows)
            # strict per-sensor seq order of stored messages (per session:
            # every session restarts its sensors at seq 1)
            for records in reader.sessions().values():
                per_sensor = {}
                for name, f in records:
                    if name == "msg":
                        per_sensor.setdefault(f["sensor"], []).append(int(f["seq"]))
                for seqs in per_sensor.values():
                    assert all(b > a for a, b in zip(seqs, seqs[1:]))

        sc = load_scenario(scenario_yaml(loss=0.1, metrics_enabled=True))
        a = run_phase1(sc, out_path=str(tmp_path / "det_a.log"))
        b = run_phase1(sc, out_path=str(tmp_path / "det_b.log"))
        ha = hashlib.sha256(open(a.log_path, "rb").read()).hexdigest()
        hb = hashlib.sha256(open(b.log_path, "rb").read()).hexdigest()
        assert ha == hb, "repeated (scenario, seed) runs must be byte-identical"
        assert (open(a.log_path + ".eeg", "rb").read()
                == open(b.log_path + ".eeg", "rb").read())
        assert replay(a.log_path).ok


# ----------------------------------------------------------------- 6 eligibility

def test_acceptance_eligibility_table():
    with criterion("eligibility-12-case-table", budget_s=5.0):
        assert len(ELIGIBILITY_TABLE) == 12
        for kwargs, eligible, fragment in ELIGIBILITY_TABLE:
            result = validate_profile(profile(**kwargs))
            assert result.eligible == eligible, (kwargs, result.reasons)
            if fragment:
                assert any(fragment in r for r in result.reasons)
