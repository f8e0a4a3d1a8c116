"""Plant-side closed-loop orchestrator.

Each step: read the simulated sensors, build the B-point output and its
reference, quantize and encrypt, mix in freshly encrypted decoys under a
random permutation, exchange with the cloud, decrypt every returned column,
check the decoy slots, and either actuate the real control input or halt.

A failed check latches the halt: the wheels are commanded (0,0) forever and a
short grace period of zeroed steps is logged so the stop is visible in the
trajectory.  The controller's integral state never lives in plaintext outside
this process: it returns encrypted at scale delta**2, is decoded and
requantized to delta, and is re-encrypted on the next send.
"""

from __future__ import annotations

import contextlib
import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

from . import decoy, fixed_point, paillier, robot
from .attacks import AttackPolicy, scale_u
from .cloud import CloudService
from .config import ConfigError, ExperimentConfig
from .decoy import BatchPlan, IntPair, PreparedPool, VerificationResult
from .protocol import LoopbackTransport, SessionSetup, StepResponse, TcpTransport, Transport
from .robot import ReferencePath, RobotState


@dataclass
class LoopState:
    robot: RobotState
    x_c_res: IntPair        # controller state, residues at scale delta
    k: int = 0
    halted: bool = False
    halt_step: int | None = None


@dataclass(frozen=True)
class StepRecord:
    k: int
    t: float
    p_x: float
    p_y: float
    theta: float
    y1: float
    y2: float
    r1: float
    r2: float
    u1: float
    u2: float
    w_r: float
    w_l: float
    detected: int


@dataclass(frozen=True)
class EventRecord:
    k: int
    verdict: str
    failed_slots: tuple[int, ...]


@dataclass(frozen=True)
class TimingRecord:
    k: int
    encrypt: float
    transport: float
    cloud: float | None     # separable on loopback transport only
    decrypt: float
    verify: float
    total: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trajectory: list[StepRecord]
    events: list[EventRecord]
    timings: list[TimingRecord]
    detection_step: int | None

    def rms_tracking_error(self, tail_fraction: float = 1.0) -> float | None:
        """RMS distance between B-point and reference over the last fraction
        of the pre-halt trajectory."""
        rows = [row for row in self.trajectory if not row.detected]
        rows = rows[int(len(rows) * (1.0 - tail_fraction)):]
        if not rows:
            return None
        sq = [(row.y1 - row.r1) ** 2 + (row.y2 - row.r2) ** 2 for row in rows]
        return math.sqrt(sum(sq) / len(sq))

    def loop_time_percentiles(self) -> dict[str, float] | None:
        if not self.timings:
            return None
        totals = sorted(t.total for t in self.timings)
        pick = lambda q: totals[min(len(totals) - 1, int(q * len(totals)))]
        return {"p50": pick(0.50), "p90": pick(0.90), "max": totals[-1]}

    def summary(self) -> str:
        lines = [f"steps logged:        {len(self.trajectory)}"]
        if self.detection_step is None:
            lines.append("detections:          none")
        else:
            lines.append(f"detections:          halt at step {self.detection_step}")
        rms = self.rms_tracking_error()
        lines.append(f"B-point RMS error:   "
                     f"{f'{rms:.6f} m' if rms is not None else 'n/a'}")
        pct = self.loop_time_percentiles()
        if pct is not None:
            lines.append(f"loop time:           p50={pct['p50']:.6f}s "
                         f"p90={pct['p90']:.6f}s max={pct['max']:.6f}s")
        return "\n".join(lines)


def setup_message(pk: paillier.PublicKey, gains: robot.PIGains, delta: float,
                  n_d: int) -> SessionSetup:
    """Session setup with the gain blocks quantized into the message space."""
    v_rows, z_rows = robot.gain_matrices(gains)

    def encode_row(row):
        return tuple(fixed_point.encode_residue(g, delta, pk.n) for g in row)

    return SessionSetup(public_key=pk,
                        v_grid=tuple(encode_row(r) for r in v_rows),
                        z_grid=tuple(encode_row(r) for r in z_rows),
                        delta=delta, n_d=n_d)


def decrypt_response(sk: paillier.SecretKey, pk: paillier.PublicKey,
                     resp: StepResponse) -> list[tuple[IntPair, IntPair]]:
    """Per-column (u, x_c_plus) residues at scale delta**2, in wire order."""
    out = []
    for col in resp.columns:
        u = (paillier.decrypt(sk, pk, col.u[0]),
             paillier.decrypt(sk, pk, col.u[1]))
        x_c_plus = (paillier.decrypt(sk, pk, col.x_c_plus[0]),
                    paillier.decrypt(sk, pk, col.x_c_plus[1]))
        out.append((u, x_c_plus))
    return out


class PlantSession:
    """Key material, pool, path, and transport bound into one runnable loop."""

    def __init__(self, cfg: ExperimentConfig, pk: paillier.PublicKey,
                 sk: paillier.SecretKey, pool: PreparedPool, path: ReferencePath,
                 transport: Transport):
        self.cfg = cfg
        self.params = cfg.robot_params()
        self.gains = cfg.gains()
        self.pk, self.sk = pk, sk
        self.pool = pool
        self.path = path
        self.transport = transport
        self.rng = cfg.rng("plant")
        self.delta = cfg.delta
        self.delta_sq = cfg.delta * cfg.delta
        self.state = LoopState(robot=path.initial_pose(), x_c_res=(0, 0))
        self._setup_sent = False

    def send_setup(self) -> None:
        self.transport.setup(setup_message(self.pk, self.gains, self.delta,
                                           self.cfg.n_d))
        self._setup_sent = True

    def loop_step(self) -> tuple[StepRecord, TimingRecord, EventRecord | None]:
        """One full sense-encrypt-exchange-verify-actuate cycle."""
        assert self._setup_sent and not self.state.halted
        cfg, state, n = self.cfg, self.state, self.pk.n
        k = state.k
        t_sim = k * self.params.t_s

        t0 = time.perf_counter()
        y = robot.virtual_output(state.robot, self.params.b)
        r = self.path.b_reference_at(t_sim, self.params.b)
        real_triple = (
            state.x_c_res,
            tuple(fixed_point.encode_residue(v, self.delta, n) for v in y),
            tuple(fixed_point.encode_residue(v, self.delta, n) for v in r),
        )
        plan, request = decoy.select_and_assemble(
            self.pool, cfg.n_d, real_triple, self.pk, self.rng, k)
        t1 = time.perf_counter()
        response = self.transport.exchange(request)
        t2 = time.perf_counter()
        columns = decrypt_response(self.sk, self.pk, response)
        t3 = time.perf_counter()
        result = self.verify(columns, plan)
        t4 = time.perf_counter()

        event: EventRecord | None = None
        if result.passed:
            u = (fixed_point.decode_residue(result.real_u[0], self.delta_sq, n),
                 fixed_point.decode_residue(result.real_u[1], self.delta_sq, n))
            wheels = robot.recover_wheel_input(u, state.robot.theta, self.params)
            state.x_c_res = (
                fixed_point.requantize(result.real_x_c_plus[0], self.delta_sq,
                                       self.delta, n),
                fixed_point.requantize(result.real_x_c_plus[1], self.delta_sq,
                                       self.delta, n),
            )
            state.robot = robot.step_diff_drive(state.robot, wheels, self.params)
            detected = 0
        else:
            u = (0.0, 0.0)
            wheels = (0.0, 0.0)
            state.halted = True
            state.halt_step = k
            event = EventRecord(k=k, verdict=result.verdict,
                                failed_slots=result.failed_slots)
            with contextlib.suppress(Exception):
                self.transport.halt(k)
            detected = 1
        state.k = k + 1

        record = StepRecord(k=k, t=t_sim, p_x=state.robot.p_x, p_y=state.robot.p_y,
                            theta=state.robot.theta, y1=y[0], y2=y[1],
                            r1=r[0], r2=r[1], u1=u[0], u2=u[1],
                            w_r=wheels[0], w_l=wheels[1], detected=detected)
        timing = TimingRecord(k=k, encrypt=t1 - t0, transport=t2 - t1,
                              cloud=self.transport.last_eval_seconds,
                              decrypt=t3 - t2, verify=t4 - t3, total=t4 - t0)
        return record, timing, event

    def verify(self, columns: list[tuple[IntPair, IntPair]],
               plan: BatchPlan) -> VerificationResult:
        return decoy.verify_response(columns, plan, self.pool)

    def run(self) -> ExperimentResult:
        """Run the configured number of steps (or until halt plus grace)."""
        if not self._setup_sent:
            self.send_setup()
        trajectory: list[StepRecord] = []
        events: list[EventRecord] = []
        timings: list[TimingRecord] = []
        next_deadline = time.monotonic()
        for _ in range(self.cfg.steps):
            if self.cfg.pace:
                next_deadline += self.params.t_s
                time.sleep(max(0.0, next_deadline - time.monotonic()))
            record, timing, event = self.loop_step()
            trajectory.append(record)
            timings.append(timing)
            if event is not None:
                events.append(event)
            if self.state.halted:
                break
        if self.state.halted:
            # Grace period: the latch is observable as a flat zero-command tail.
            state = self.state
            for _ in range(self.cfg.grace_steps):
                k = state.k
                y = robot.virtual_output(state.robot, self.params.b)
                r = self.path.b_reference_at(k * self.params.t_s, self.params.b)
                trajectory.append(StepRecord(
                    k=k, t=k * self.params.t_s, p_x=state.robot.p_x,
                    p_y=state.robot.p_y, theta=state.robot.theta,
                    y1=y[0], y2=y[1], r1=r[0], r2=r[1],
                    u1=0.0, u2=0.0, w_r=0.0, w_l=0.0, detected=1))
                state.k = k + 1
        self.transport.close()
        return ExperimentResult(config=self.cfg, trajectory=trajectory,
                                events=events, timings=timings,
                                detection_step=self.state.halt_step)


def generate_keys(cfg: ExperimentConfig) -> tuple[paillier.PublicKey, paillier.SecretKey]:
    if cfg.key_file is not None:
        return paillier.load_keypair(cfg.key_file)
    return paillier.keygen(cfg.key_bits, cfg.rng("key"))


def build_pool(cfg: ExperimentConfig) -> decoy.DecoyPool:
    if cfg.pool_file is not None:
        return decoy.load_pool(cfg.pool_file, cfg.gains(), cfg.delta,
                               allow_single=cfg.allow_single_decoy)
    if cfg.pool_size == 2:
        return decoy.builtin_pool(cfg.gains(), cfg.delta)
    return decoy.build_decoy_pool(cfg.pool_size, cfg.gains(), cfg.rng("pool"),
                                  delta=cfg.delta,
                                  allow_single=cfg.allow_single_decoy)


def build_path(cfg: ExperimentConfig) -> ReferencePath:
    if cfg.waypoint_file is not None:
        waypoints = robot.load_waypoints(cfg.waypoint_file)
    else:
        waypoints = robot.figure_eight_waypoints()
    return ReferencePath(waypoints, speed=cfg.speed)


def attack_policy_from_config(cfg: ExperimentConfig) -> AttackPolicy | None:
    if cfg.attack is None:
        return None
    transform = None
    if cfg.attack == "guess_and_tamper":
        transform = scale_u(cfg.tamper_factor)
    return AttackPolicy(kind=cfg.attack, k_a=cfg.k_a, transform=transform)


def loopback_transport(cfg: ExperimentConfig) -> LoopbackTransport:
    """Self-hosted cloud behind an in-process byte-faithful transport."""
    service = CloudService(rng=cfg.rng("cloud"))
    policy = attack_policy_from_config(cfg)
    if policy is not None:
        service.install_attack(policy)
    return LoopbackTransport(service.configure, service.handle_request,
                             service.handle_halt)


def build_session(cfg: ExperimentConfig,
                  keys: tuple[paillier.PublicKey, paillier.SecretKey] | None = None,
                  pool: decoy.DecoyPool | None = None,
                  path: ReferencePath | None = None,
                  transport: Transport | None = None) -> PlantSession:
    """Assemble a runnable session; prebuilt pieces may be shared across runs."""
    cfg.validate()
    if cfg.n_d == 0 and cfg.attack is not None:
        raise ConfigError(["n_d=0 disables verification; an attack would go "
                           "undetected by construction"])
    pk, sk = keys if keys is not None else generate_keys(cfg)
    pool = pool if pool is not None else build_pool(cfg)
    path = path if path is not None else build_path(cfg)
    if transport is None:
        if cfg.endpoint is None:
            transport = loopback_transport(cfg)
        else:
            if cfg.attack is not None:
                raise ConfigError([
                    "attack policies install on the cloud side; with a remote "
                    "endpoint start the server with --attack instead"])
            host, _, port = cfg.endpoint.rpartition(":")
            transport = TcpTransport(host, int(port))
    prepared = decoy.prepare_pool(pool, pk, cfg.delta)
    return PlantSession(cfg, pk, sk, prepared, path, transport)


def run_experiment(cfg: ExperimentConfig, transport: Transport | None = None) -> ExperimentResult:
    return build_session(cfg, transport=transport).run()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trajectory_csv(path: str | Path, rows: list[StepRecord]) -> None:
    fields = ["k", "t", "p_x", "p_y", "theta", "y1", "y2", "r1", "r2",
              "u1", "u2", "w_r", "w_l", "detected"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(getattr(row, f)) for f in fields])


def write_events_csv(path: str | Path, rows: list[EventRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "verdict", "failed_slots"])
        for row in rows:
            writer.writerow([row.k, row.verdict,
                             ";".join(str(s) for s in row.failed_slots)])


def write_timings_csv(path: str | Path, rows: list[TimingRecord]) -> None:
    fields = ["k", "encrypt", "transport", "cloud", "decrypt", "verify", "total"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(getattr(row, f)) for f in fields])
