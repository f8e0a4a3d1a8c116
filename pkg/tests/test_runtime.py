"""Closed-loop plant runtime: oracle equivalence, halt latch, determinism."""

import dataclasses
import random
import threading

import pytest

from decoyctl import cloud, oracle, paillier, runtime
from decoyctl.config import ConfigError, ExperimentConfig
from decoyctl.robot import PIGains

FAST = dict(key_bits=32, steps=60, seed=11)


def run(cfg: ExperimentConfig) -> runtime.ExperimentResult:
    return runtime.run_experiment(cfg)


class TestSetupMessage:
    def test_gain_grids_encode_signs(self, small_keys):
        pk, _ = small_keys
        msg = runtime.setup_message(pk, PIGains(), 1e-4, n_d=2)
        assert msg.n_d == 2
        assert msg.v_grid[0] == (10000, 0, 1500, 0, pk.n - 1500, 0)
        assert msg.v_grid[1] == (0, 10000, 0, 1500, 0, pk.n - 1500)
        assert msg.z_grid[0] == (2000, 0, 40000, 0, pk.n - 40000, 0)
        assert msg.z_grid[1] == (0, 2000, 0, 40000, 0, pk.n - 40000)

    def test_decrypt_response_wire_order(self, small_keys):
        pk, sk = small_keys
        rng = random.Random(0)
        from decoyctl.protocol import ResponseColumn, StepResponse
        resp = StepResponse(k=0, columns=(
            ResponseColumn(u=(paillier.encrypt(pk, 5, rng), paillier.encrypt(pk, 6, rng)),
                           x_c_plus=(paillier.encrypt(pk, 7, rng),
                                     paillier.encrypt(pk, 8, rng))),
        ))
        assert runtime.decrypt_response(sk, pk, resp) == [((5, 6), (7, 8))]


class TestHonestLoop:
    def test_matches_plaintext_oracle_exactly(self):
        cfg = ExperimentConfig(**FAST)
        encrypted = run(cfg)
        reference = oracle.plaintext_loop(cfg)
        assert encrypted.detection_step is None
        assert encrypted.events == []
        assert encrypted.trajectory == reference  # bit-exact, field by field

    def test_zero_steps(self):
        result = run(ExperimentConfig(**{**FAST, "steps": 0}))
        assert result.trajectory == []
        assert result.events == []
        assert result.timings == []
        assert result.detection_step is None

    def test_no_decoys_matches_oracle_too(self):
        cfg = ExperimentConfig(**{**FAST, "n_d": 0})
        assert run(cfg).trajectory == oracle.plaintext_loop(cfg)

    def test_tracking_error_is_small(self):
        result = run(ExperimentConfig(**{**FAST, "steps": 200}))
        rms = result.rms_tracking_error(tail_fraction=0.5)
        assert rms is not None and rms < 0.05

    def test_timings_have_cloud_phase_on_loopback(self):
        result = run(ExperimentConfig(**{**FAST, "steps": 5}))
        assert len(result.timings) == 5
        for t in result.timings:
            assert t.cloud is not None and t.cloud >= 0.0
            assert t.total >= t.encrypt + t.decrypt + t.verify - 1e-9

    def test_summary_mentions_key_figures(self):
        result = run(ExperimentConfig(**{**FAST, "steps": 10}))
        text = result.summary()
        assert "steps logged:        10" in text
        assert "detections:          none" in text
        assert "RMS error" in text


class TestDeterminism:
    def test_repeat_runs_identical(self, tmp_path):
        cfg = ExperimentConfig(**{**FAST, "steps": 30, "attack": "replay", "k_a": 10})
        first, second = run(cfg), run(dataclasses.replace(cfg))
        assert first.trajectory == second.trajectory
        assert first.events == second.events
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        runtime.write_trajectory_csv(a, first.trajectory)
        runtime.write_trajectory_csv(b, second.trajectory)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_the_run(self):
        cfg = ExperimentConfig(**{**FAST, "attack": "replay", "k_a": 0})
        other = dataclasses.replace(cfg, seed=cfg.seed + 1)
        assert run(cfg).detection_step != run(other).detection_step


class TestHaltLatch:
    def test_replay_halts_and_zeroes(self):
        cfg = ExperimentConfig(**{**FAST, "steps": 50, "attack": "replay",
                                  "k_a": 5, "grace_steps": 4})
        result = run(cfg)
        halt = result.detection_step
        assert halt is not None and halt >= 5
        assert result.events == [runtime.EventRecord(
            k=halt, verdict="fail", failed_slots=result.events[0].failed_slots)]
        assert len(result.events[0].failed_slots) >= 1
        # Rows before the halt are honest; the halt row and grace rows are
        # flat zero-command rows flagged as detected.
        for row in result.trajectory:
            if row.k < halt:
                assert row.detected == 0
            else:
                assert row.detected == 1
                assert (row.u1, row.u2, row.w_r, row.w_l) == (0, 0, 0, 0)
        assert result.trajectory[-1].k == halt + 4
        # Pose freezes at the halt: the grace rows do not move the robot.
        frozen = [(r.p_x, r.p_y, r.theta) for r in result.trajectory if r.k >= halt]
        assert len(set(frozen)) == 1

    def test_tamper_detected_with_fail_verdict(self):
        cfg = ExperimentConfig(**{**FAST, "attack": "guess_and_tamper",
                                  "k_a": 0, "tamper_factor": 3})
        result = run(cfg)
        assert result.detection_step is not None
        assert result.events[0].verdict == "fail"

    def test_honest_prefix_matches_oracle_before_attack(self):
        cfg = ExperimentConfig(**{**FAST, "attack": "replay", "k_a": 20})
        result = run(cfg)
        reference = oracle.plaintext_loop(dataclasses.replace(cfg, attack=None))
        assert result.detection_step is not None
        assert result.detection_step >= 20
        honest = [row for row in result.trajectory if row.k < 20]
        assert honest == reference[:20]


class TestConfigGuards:
    def test_attack_without_verification_rejected(self):
        cfg = ExperimentConfig(**{**FAST, "n_d": 0, "attack": "replay"})
        with pytest.raises(ConfigError, match="n_d=0"):
            runtime.build_session(cfg)

    def test_attack_with_remote_endpoint_rejected(self):
        cfg = ExperimentConfig(**{**FAST, "attack": "replay",
                                  "endpoint": "127.0.0.1:9"})
        with pytest.raises(ConfigError, match="cloud side"):
            runtime.build_session(cfg)


class TestTcpEndpoint:
    def test_run_over_tcp_matches_loopback(self):
        ready = threading.Event()
        ports: list[int] = []
        thread = threading.Thread(
            target=cloud.serve,
            args=("127.0.0.1", 0, cloud.CloudService),
            kwargs=dict(sessions=1, ready=ready, bound_port=ports),
            daemon=True,
        )
        thread.start()
        assert ready.wait(5.0)
        cfg = ExperimentConfig(**{**FAST, "steps": 25,
                                  "endpoint": f"127.0.0.1:{ports[0]}"})
        over_tcp = run(cfg)
        thread.join(5.0)
        local = run(dataclasses.replace(cfg, endpoint=None))
        assert over_tcp.trajectory == local.trajectory
        # The cloud phase is not separable over a real network.
        assert all(t.cloud is None for t in over_tcp.timings)


class TestCsvWriters:
    def test_trajectory_csv(self, tmp_path):
        result = run(ExperimentConfig(**{**FAST, "steps": 3}))
        file = tmp_path / "trajectory.csv"
        runtime.write_trajectory_csv(file, result.trajectory)
        lines = file.read_text().splitlines()
        assert lines[0] == "k,t,p_x,p_y,theta,y1,y2,r1,r2,u1,u2,w_r,w_l,detected"
        assert len(lines) == 4
        assert lines[1].startswith("0,0.0,")

    def test_events_csv_formats_slots(self, tmp_path):
        file = tmp_path / "events.csv"
        runtime.write_events_csv(file, [
            runtime.EventRecord(k=12, verdict="fail", failed_slots=(0, 2))])
        assert file.read_text().splitlines() == ["k,verdict,failed_slots",
                                                 "12,fail,0;2"]

    def test_timings_csv_blank_for_missing_cloud(self, tmp_path):
        file = tmp_path / "timing.csv"
        runtime.write_timings_csv(file, [
            runtime.TimingRecord(k=0, encrypt=0.5, transport=0.25, cloud=None,
                                 decrypt=0.125, verify=0.0625, total=1.0)])
        lines = file.read_text().splitlines()
        assert lines[0] == "k,encrypt,transport,cloud,decrypt,verify,total"
        assert lines[1] == "0,0.5,0.25,,0.125,0.0625,1.0"
