"""Experiment engines: Monte Carlo detection statistics and loop benchmarks.

The survival engine runs the real assemble/evaluate/verify pipeline (without
the robot, whose dynamics are irrelevant to detection) against an attacking
cloud, many times with derived seeds, and compares the measured survival
curve with the analytic law (1/(n_d+1))^(k+1).  The replay engine runs full
plant sessions to capture halt delays and latch behavior.  The benchmark
times each loop phase on the loopback transport and isolates the decoy
overhead by differencing against an n_d=0 run.
"""

from __future__ import annotations

import csv
import dataclasses
import random
import statistics
from dataclasses import dataclass
from pathlib import Path

from scipy import stats as scipy_stats

from . import decoy, paillier, runtime
from .attacks import AttackPolicy
from .cloud import CloudService
from .config import ExperimentConfig
from .decoy import survival_probability
from .fixed_point import DELTA_DEFAULT
from .robot import PIGains

MC_ATTACKERS = ("guess_and_tamper", "constant_decoy_replay")


@dataclass(frozen=True)
class SurvivalStats:
    """Detection outcomes for one (attacker, n_d) Monte Carlo batch."""

    attacker: str
    n_d: int
    pool_size: int
    runs: int
    horizon: int
    detection_steps: tuple[int | None, ...]

    def survivors(self, k: int) -> int:
        """Runs still undetected after steps 0..k."""
        return sum(1 for d in self.detection_steps if d is None or d > k)

    def empirical_survival(self, k: int) -> float:
        return self.survivors(k) / self.runs

    def analytic_survival(self, k: int) -> float | None:
        if self.attacker == "guess_and_tamper":
            return survival_probability(self.n_d, k)
        return None

    def binomial_sigma(self, k: int, p: float) -> float:
        return (p * (1.0 - p) / self.runs) ** 0.5

    def detection_frequency(self, k: int) -> float | None:
        """Fraction of runs alive entering step k that are caught at step k."""
        alive = self.runs if k == 0 else self.survivors(k - 1)
        if alive == 0:
            return None
        caught = sum(1 for d in self.detection_steps if d == k)
        return caught / alive


def montecarlo_survival(attacker: str, n_d_values: list[int], runs: int,
                        horizon: int, seed: int = 0, key_bits: int = 64,
                        pool_size: int = 2, delta: float = DELTA_DEFAULT,
                        gains: PIGains | None = None) -> list[SurvivalStats]:
    """Survival curves from repeated attacked sessions with derived seeds."""
    if attacker not in MC_ATTACKERS:
        raise ValueError(f"attacker must be one of {MC_ATTACKERS}")
    gains = gains or PIGains()
    pk, sk = paillier.keygen(key_bits, random.Random(f"{seed}/key"))
    if pool_size == 2:
        pool = decoy.builtin_pool(gains, delta)
    else:
        pool = decoy.build_decoy_pool(pool_size, gains, random.Random(f"{seed}/pool"),
                                      delta=delta, allow_single=True)
    prepared = decoy.prepare_pool(pool, pk, delta)
    zero_triple = ((0, 0), (0, 0), (0, 0))

    results = []
    for n_d in n_d_values:
        if n_d < 1:
            raise ValueError("Monte Carlo requires n_d >= 1 (no decoys, no detection)")
        setup = runtime.setup_message(pk, gains, delta, n_d)
        detection_steps: list[int | None] = []
        for i in range(runs):
            rng_plant = random.Random(f"{seed}/plant/{n_d}/{i}")
            service = CloudService(rng=random.Random(f"{seed}/cloud/{n_d}/{i}"))
            service.install_attack(AttackPolicy(kind=attacker, k_a=0))
            service.configure(setup)
            detected: int | None = None
            for k in range(horizon):
                plan, req = decoy.select_and_assemble(
                    prepared, n_d, zero_triple, pk, rng_plant, k)
                columns = runtime.decrypt_response(sk, pk, service.handle_request(req))
                if not decoy.verify_response(columns, plan, prepared).passed:
                    detected = k
                    break
            detection_steps.append(detected)
        results.append(SurvivalStats(attacker=attacker, n_d=n_d, pool_size=len(pool),
                                     runs=runs, horizon=horizon,
                                     detection_steps=tuple(detection_steps)))
    return results


@dataclass(frozen=True)
class ReplayStats:
    """Outcomes of full replay-attack sessions (activation at k_a)."""

    runs: int
    k_a: int
    horizon: int
    detection_steps: tuple[int | None, ...]
    early_detections: int       # halts before k_a (must be zero)
    undetected_runs: int        # horizon reached without a halt
    nonzero_after_halt: int     # trajectory rows violating the zero-command latch

    @property
    def delays(self) -> list[int]:
        return [d - self.k_a for d in self.detection_steps if d is not None]

    def detection_frequency_after_activation(self) -> tuple[float, float]:
        """Pooled per-step detection estimate and its binomial sigma at p=1/2.

        Every step at or after k_a in which a run is still alive is one
        Bernoulli trial; censored runs contribute trials without a success.
        """
        trials = sum(d + 1 for d in self.delays)
        trials += self.undetected_runs * (self.horizon - self.k_a)
        detected = len(self.delays)
        sigma = (0.25 / trials) ** 0.5 if trials else float("nan")
        return (detected / trials if trials else float("nan"), sigma)

    def delay_histogram(self, tail_from: int = 6) -> tuple[list[int], list[float]]:
        """Observed delay counts in bins 0..tail_from-1 plus a >=tail_from tail,
        against Geometric(1/2) expectations."""
        observed = [0] * (tail_from + 1)
        for d in self.delays:
            observed[min(d, tail_from)] += 1
        total = len(self.delays)
        expected = [total * 0.5 ** (m + 1) for m in range(tail_from)]
        expected.append(total * 0.5 ** tail_from)
        return observed, expected

    def chi_square_geometric(self, tail_from: int = 6) -> tuple[float, float]:
        """Chi-square statistic and p-value for delays ~ Geometric(1/2)."""
        observed, expected = self.delay_histogram(tail_from)
        stat, pvalue = scipy_stats.chisquare(observed, expected)
        return float(stat), float(pvalue)


def montecarlo_replay(runs: int, k_a: int = 200, horizon: int = 240, seed: int = 0,
                      key_bits: int = 64, n_d: int = 1,
                      grace_steps: int = 10) -> ReplayStats:
    """Full-loop replay-attack sessions sharing keys, pool, and path."""
    base = ExperimentConfig(steps=horizon, key_bits=key_bits, n_d=n_d,
                            attack="replay", k_a=k_a, grace_steps=grace_steps,
                            seed=seed)
    base.validate()
    keys = runtime.generate_keys(base)
    pool = runtime.build_pool(base)
    path = runtime.build_path(base)

    detection_steps: list[int | None] = []
    early = 0
    undetected = 0
    nonzero_after_halt = 0
    for i in range(runs):
        cfg = dataclasses.replace(base, seed=seed + 1 + i)
        result = runtime.build_session(cfg, keys=keys, pool=pool, path=path).run()
        d = result.detection_step
        detection_steps.append(d)
        if d is None:
            undetected += 1
        elif d < k_a:
            early += 1
        nonzero_after_halt += sum(
            1 for row in result.trajectory
            if row.detected and (row.w_r != 0.0 or row.w_l != 0.0))
    return ReplayStats(runs=runs, k_a=k_a, horizon=horizon,
                       detection_steps=tuple(detection_steps),
                       early_detections=early, undetected_runs=undetected,
                       nonzero_after_halt=nonzero_after_halt)


PHASES = ("encrypt", "transport", "cloud", "decrypt", "verify", "total")


@dataclass(frozen=True)
class PhaseStats:
    minimum: float
    q1: float
    median: float
    mean: float
    q3: float
    maximum: float

    @classmethod
    def of(cls, values: list[float]) -> "PhaseStats":
        q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
        return cls(minimum=min(values), q1=q1, median=med,
                   mean=statistics.fmean(values), q3=q3, maximum=max(values))


@dataclass(frozen=True)
class BenchReport:
    key_bits: int
    n_d: int
    iterations: int
    phases: dict[int, dict[str, PhaseStats]]   # n_d -> phase -> stats
    decoy_overhead_seconds: float              # median total, n_d vs 0

    def table(self) -> str:
        lines = [f"loop timing, {self.key_bits}-bit primes, "
                 f"{self.iterations} iterations (seconds)"]
        header = f"{'n_d':>4} {'phase':<10}" + "".join(
            f"{c:>12}" for c in ("min", "q1", "median", "mean", "q3", "max"))
        lines.append(header)
        for n_d, phases in sorted(self.phases.items()):
            for name in PHASES:
                if name not in phases:
                    continue
                s = phases[name]
                lines.append(f"{n_d:>4} {name:<10}" + "".join(
                    f"{v:>12.6f}" for v in (s.minimum, s.q1, s.median,
                                            s.mean, s.q3, s.maximum)))
        lines.append(f"decoy overhead (median total, n_d={self.n_d} minus n_d=0): "
                     f"{self.decoy_overhead_seconds:.6f} s")
        return "\n".join(lines)


def bench(key_bits: int = 512, n_d: int = 1, iterations: int = 50,
          seed: int = 0) -> BenchReport:
    """Phase-resolved loop timings on the loopback transport."""
    if iterations < 10:
        raise ValueError("need at least 10 iterations for stable quartiles")
    phases: dict[int, dict[str, PhaseStats]] = {}
    medians: dict[int, float] = {}
    for nd in sorted({0, n_d}):
        cfg = ExperimentConfig(steps=iterations, key_bits=key_bits, n_d=nd,
                               seed=seed, attack=None, grace_steps=0)
        result = runtime.run_experiment(cfg)
        samples: dict[str, list[float]] = {name: [] for name in PHASES}
        for row in result.timings:
            cloud = row.cloud if row.cloud is not None else 0.0
            samples["encrypt"].append(row.encrypt)
            samples["transport"].append(row.transport - cloud)
            samples["cloud"].append(cloud)
            samples["decrypt"].append(row.decrypt)
            samples["verify"].append(row.verify)
            samples["total"].append(row.total)
        phases[nd] = {name: PhaseStats.of(vals) for name, vals in samples.items()}
        medians[nd] = phases[nd]["total"].median
    overhead = medians[n_d] - medians[0] if n_d != 0 else 0.0
    return BenchReport(key_bits=key_bits, n_d=n_d, iterations=iterations,
                       phases=phases, decoy_overhead_seconds=overhead)


# --- report files ---

def write_survival_csv(path: str | Path, batches: list[SurvivalStats]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attacker", "n_d", "pool_size", "runs", "k", "survivors",
                         "empirical_survival", "analytic_survival",
                         "binomial_sigma", "detection_frequency"])
        for b in batches:
            for k in range(b.horizon):
                analytic = b.analytic_survival(k)
                sigma = "" if analytic is None else repr(b.binomial_sigma(k, analytic))
                freq = b.detection_frequency(k)
                writer.writerow([
                    b.attacker, b.n_d, b.pool_size, b.runs, k, b.survivors(k),
                    repr(b.empirical_survival(k)),
                    "" if analytic is None else repr(analytic),
                    sigma, "" if freq is None else repr(freq),
                ])


def format_survival(batches: list[SurvivalStats]) -> str:
    lines = []
    for b in batches:
        lines.append(f"attacker={b.attacker} n_d={b.n_d} pool_size={b.pool_size} "
                     f"runs={b.runs}")
        lines.append(f"{'k':>4} {'empirical':>12} {'analytic':>12} {'3sigma':>12}")
        for k in range(b.horizon):
            analytic = b.analytic_survival(k)
            a_col = f"{analytic:>12.6f}" if analytic is not None else f"{'-':>12}"
            s_col = (f"{3 * b.binomial_sigma(k, analytic):>12.6f}"
                     if analytic is not None else f"{'-':>12}")
            lines.append(f"{k:>4} {b.empirical_survival(k):>12.6f} {a_col} {s_col}")
    return "\n".join(lines)


def write_replay_csv(path: str | Path, stats: ReplayStats) -> None:
    observed, expected = stats.delay_histogram()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delay_bin", "observed", "expected_geometric_half"])
        for m, (obs, exp) in enumerate(zip(observed, expected)):
            label = str(m) if m < len(observed) - 1 else f">={m}"
            writer.writerow([label, obs, repr(exp)])


def format_replay(stats: ReplayStats) -> str:
    freq, sigma = stats.detection_frequency_after_activation()
    chi, pvalue = stats.chi_square_geometric()
    observed, expected = stats.delay_histogram()
    lines = [
        f"replay attack at k_a={stats.k_a}: {stats.runs} runs, horizon {stats.horizon}",
        f"detections before activation: {stats.early_detections}",
        f"runs never detected:          {stats.undetected_runs}",
        f"rows breaking the halt latch: {stats.nonzero_after_halt}",
        f"per-step detection frequency: {freq:.4f} (target 0.5, sigma {sigma:.4f})",
        f"halt-delay chi-square vs Geometric(1/2): stat={chi:.3f} p={pvalue:.4f}",
        "delay histogram (observed / expected):",
    ]
    for m, (obs, exp) in enumerate(zip(observed, expected)):
        label = str(m) if m < len(observed) - 1 else f">={m}"
        lines.append(f"  {label:>3}: {obs:>6} / {exp:.1f}")
    return "\n".join(lines)


def write_bench_csv(path: str | Path, report: BenchReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_d", "phase", "min", "q1", "median", "mean", "q3", "max"])
        for n_d, phases in sorted(report.phases.items()):
            for name in PHASES:
                s = phases[name]
                writer.writerow([n_d, name] + [repr(v) for v in (
                    s.minimum, s.q1, s.median, s.mean, s.q3, s.maximum)])
