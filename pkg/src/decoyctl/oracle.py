"""Independent reference implementations used as test oracles.

Nothing here touches the encrypted pipeline: the controller is evaluated in
plain signed-integer arithmetic straight from the PI difference equations,
and the exhaustive Paillier tables are built with stdlib `pow` only.  Tests
compare the production modules against these; sharing evaluation code would
make those comparisons vacuous, so this module deliberately reimplements
them.  (Quantization helpers and the robot model are shared — they are the
domain being checked against, not the thing under test.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import robot
from .config import ExperimentConfig
from .fixed_point import round_half_away
from .robot import PIGains, Vec2
from .runtime import StepRecord, build_path


@dataclass(frozen=True)
class QuantizedGains:
    """PI coefficients on the 1/delta grid, as signed integers."""

    one: int
    t_s: int
    k_p: int
    k_i: int

    @classmethod
    def of(cls, gains: PIGains, delta: float) -> "QuantizedGains":
        q = lambda v: round_half_away(v / delta)
        return cls(one=q(1.0), t_s=q(gains.t_s), k_p=q(gains.k_p), k_i=q(gains.k_i))


def pi_reference_outputs(x_c: Vec2, y: Vec2, r: Vec2, gains: PIGains,
                         delta: float) -> tuple[tuple[int, int], tuple[int, int]]:
    """Quantized PI evaluation from the difference equations.

    Returns (u, x_c_plus) as signed integers at scale delta**2 — the values
    the encrypted evaluation must reproduce modulo n.
    """
    qg = QuantizedGains.of(gains, delta)
    q = lambda v: round_half_away(v / delta)
    u = []
    x_c_plus = []
    for axis in range(2):
        xc_i, e_i = q(x_c[axis]), q(r[axis]) - q(y[axis])
        u.append(qg.k_i * xc_i + qg.k_p * e_i)
        x_c_plus.append(qg.one * xc_i + qg.t_s * e_i)
    return (u[0], u[1]), (x_c_plus[0], x_c_plus[1])


def pi_output_error_bound(gains: PIGains, delta: float, magnitude: float) -> float:
    """Pointwise bound on |quantized u - exact u| for inputs within |.| <= magnitude."""
    # Each factor of each product carries at most delta/2 of rounding error.
    gain_err = delta / 2.0 * (abs(gains.k_i) + 2.0 * abs(gains.k_p))
    signal_err = delta / 2.0 * 3.0 * magnitude
    cross_err = 3.0 * delta * delta / 4.0
    return gain_err + signal_err + cross_err


def plaintext_loop(cfg: ExperimentConfig) -> list[StepRecord]:
    """The honest control loop with the cloud replaced by local arithmetic.

    Produces records on the exact schema of the encrypted run; an honest
    encrypted run with the same configuration must match it field-for-field.
    """
    cfg.validate()
    params = cfg.robot_params()
    gains = cfg.gains()
    path = build_path(cfg)
    delta = cfg.delta
    delta_sq = delta * delta
    q = lambda v: round_half_away(v / delta)

    state = path.initial_pose()
    x_c = (0, 0)  # integers at scale delta
    records = []
    for k in range(cfg.steps):
        t_sim = k * params.t_s
        y = robot.virtual_output(state, params.b)
        r = path.b_reference_at(t_sim, params.b)
        x_c_f = (x_c[0] * delta, x_c[1] * delta)
        u_int, x_c_plus_int = pi_reference_outputs(x_c_f, y, r, gains, delta)
        u = (u_int[0] * delta_sq, u_int[1] * delta_sq)
        wheels = robot.recover_wheel_input(u, state.theta, params)
        x_c = (round_half_away((x_c_plus_int[0] * delta_sq) / delta),
               round_half_away((x_c_plus_int[1] * delta_sq) / delta))
        state = robot.step_diff_drive(state, wheels, params)
        records.append(StepRecord(k=k, t=t_sim, p_x=state.p_x, p_y=state.p_y,
                                  theta=state.theta, y1=y[0], y2=y[1],
                                  r1=r[0], r2=r[1], u1=u[0], u2=u[1],
                                  w_r=wheels[0], w_l=wheels[1], detected=0))
    return records


@dataclass(frozen=True)
class PaillierTables:
    """Exhaustive operation tables for a toy modulus (stdlib arithmetic only)."""

    p: int
    q: int
    n: int
    n_sq: int
    lam: int
    mu: int
    nonces: tuple[int, ...]                    # all valid encryption nonces
    encrypt: dict[tuple[int, int], int]        # (m, r) -> ciphertext
    decrypt: dict[int, int]                    # ciphertext -> m

    def enc(self, m: int, r: int) -> int:
        return self.encrypt[(m, r)]


def _is_small_prime(v: int) -> bool:
    return v >= 2 and all(v % d for d in range(2, int(math.isqrt(v)) + 1))


def brute_force_paillier(p: int, q: int) -> PaillierTables:
    """Enumerate every (plaintext, nonce) encryption and invert the map."""
    if not (_is_small_prime(p) and _is_small_prime(q)) or p == q:
        raise ValueError("p and q must be distinct small primes")
    if p > 13 or q > 13:
        raise ValueError("brute force is for toy primes (<= 13) only")
    n = p * q
    n_sq = n * n
    g = n + 1
    lam = (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
    mu = pow((pow(g, lam, n_sq) - 1) // n, -1, n)
    nonces = tuple(r for r in range(1, n) if math.gcd(r, n) == 1)
    encrypt = {}
    decrypt = {}
    for m in range(n):
        for r in nonces:
            c = pow(g, m, n_sq) * pow(r, n, n_sq) % n_sq
            encrypt[(m, r)] = c
            decrypt[c] = m
    return PaillierTables(p=p, q=q, n=n, n_sq=n_sq, lam=lam, mu=mu,
                          nonces=nonces, encrypt=encrypt, decrypt=decrypt)
