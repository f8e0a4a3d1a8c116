"""Cut-and-choose machinery around the encrypted controller.

A decoy pool holds input triples (x_c, y, r) together with the controller
outputs (u, x_c_plus) they must produce.  Each step the plant selects n_d
pool entries (with replacement), mixes them with the real measurement column
under a uniformly random permutation, and freshly encrypts everything.  The
returned batch is checked slot-by-slot: every decoy slot must decrypt to its
precomputed expectation, as an exact integer comparison at the delta**2
scale.  Any mismatch halts the plant.

Expectations are computed here with plain signed-integer arithmetic, which
coincides with the cloud's modular arithmetic as long as magnitudes stay
below n/2 (they do, by the pool range checks).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from . import fixed_point, paillier
from .fixed_point import round_half_away
from .robot import PIGains, Vec2, gain_matrices

# Default sampling envelope for random pools: matches the tracking task's
# workspace so decoys carry plausible magnitudes.
RANGE_DEFAULT = 5.0

IntPair = tuple[int, int]


@dataclass(frozen=True)
class DecoyTuple:
    """One pool entry: expected outputs first, then the input triple."""

    u: Vec2
    x_c_plus: Vec2
    x_c: Vec2
    y: Vec2
    r: Vec2

    def scalars(self) -> tuple[float, ...]:
        return (*self.u, *self.x_c_plus, *self.x_c, *self.y, *self.r)


@dataclass(frozen=True)
class DecoyPool:
    tuples: tuple[DecoyTuple, ...]

    def __len__(self) -> int:
        return len(self.tuples)


@dataclass(frozen=True)
class PreparedDecoy:
    """A pool entry bound to a key: input residues at scale delta, expected
    output residues at scale delta**2."""

    inputs_l1: tuple[IntPair, IntPair, IntPair]  # x_c, y, r
    expected_u_l2: IntPair
    expected_x_c_plus_l2: IntPair


@dataclass(frozen=True)
class PreparedPool:
    decoys: tuple[PreparedDecoy, ...]

    def __len__(self) -> int:
        return len(self.decoys)


@dataclass(frozen=True)
class BatchPlan:
    """Where each pre-permutation column landed and which decoys were drawn."""

    omega: tuple[int, ...]      # omega[i] = slot of pre-permutation column i
    selection: tuple[int, ...]  # pool index per decoy column (1..n_d)

    @property
    def real_slot(self) -> int:
        return self.omega[0]


@dataclass(frozen=True)
class VerificationResult:
    verdict: str                      # "pass" | "fail"
    failed_slots: tuple[int, ...]
    real_u: IntPair | None            # residues at scale delta**2 when passing
    real_x_c_plus: IntPair | None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _quantize_signed(values: Vec2, delta: float) -> IntPair:
    return (round_half_away(values[0] / delta), round_half_away(values[1] / delta))


def quantized_controller_outputs(x_c: Vec2, y: Vec2, r: Vec2, gains: PIGains,
                                 delta: float) -> tuple[IntPair, IntPair]:
    """Signed-integer controller evaluation at scale delta**2.

    Returns (u, x_c_plus) residues exactly as the encrypted evaluation
    produces them (modulo the signed/modular correspondence).
    """
    v = (*_quantize_signed(x_c, delta), *_quantize_signed(r, delta),
         *_quantize_signed(y, delta))
    v_grid, z_grid = gain_matrices(gains)
    v_int = [[round_half_away(g / delta) for g in row] for row in v_grid]
    z_int = [[round_half_away(g / delta) for g in row] for row in z_grid]
    x_c_plus = tuple(sum(gi * vi for gi, vi in zip(row, v)) for row in v_int)
    u = tuple(sum(gi * vi for gi, vi in zip(row, v)) for row in z_int)
    return u, x_c_plus  # type: ignore[return-value]


def make_decoy(x_c: Vec2, y: Vec2, r: Vec2, gains: PIGains, delta: float) -> DecoyTuple:
    """Build a compliant pool entry: snap inputs to the delta grid, derive outputs."""
    delta_sq = delta * delta
    snap = lambda v: (round_half_away(v[0] / delta) * delta,
                      round_half_away(v[1] / delta) * delta)
    x_c, y, r = snap(x_c), snap(y), snap(r)
    u_int, x_c_plus_int = quantized_controller_outputs(x_c, y, r, gains, delta)
    return DecoyTuple(
        u=(u_int[0] * delta_sq, u_int[1] * delta_sq),
        x_c_plus=(x_c_plus_int[0] * delta_sq, x_c_plus_int[1] * delta_sq),
        x_c=x_c, y=y, r=r,
    )


def check_compliance(tup: DecoyTuple, gains: PIGains, delta: float) -> None:
    """Raise if a tuple's stated outputs disagree with the controller law."""
    rebuilt = make_decoy(tup.x_c, tup.y, tup.r, gains, delta)
    delta_sq = delta * delta
    for name, stated, expect in (("u", tup.u, rebuilt.u),
                                 ("x_c_plus", tup.x_c_plus, rebuilt.x_c_plus)):
        stated_int = _quantize_signed(stated, delta_sq)
        expect_int = _quantize_signed(expect, delta_sq)
        if stated_int != expect_int:
            raise ValueError(
                f"decoy tuple not compliant: {name} states {stated}, "
                f"controller yields {expect}"
            )


def _check_pool_size(count: int, allow_single: bool) -> None:
    if count < 1:
        raise ValueError("pool must contain at least one tuple")
    if count < 2 and not allow_single:
        raise ValueError(
            "pool size 1 defeats the verification scheme (a constant replay of "
            "the known decoy survives); pass the single-decoy override to build "
            "it anyway"
        )


def builtin_pool(gains: PIGains | None = None,
                 delta: float = fixed_point.DELTA_DEFAULT) -> DecoyPool:
    """The stock two-entry pool used by the reference experiments."""
    gains = gains or PIGains()
    return DecoyPool(tuples=(
        make_decoy(x_c=(0.0, 0.0), y=(2.0, 2.0), r=(2.5, 2.5), gains=gains, delta=delta),
        make_decoy(x_c=(5.0, 5.0), y=(1.0, 1.0), r=(0.0, 0.0), gains=gains, delta=delta),
    ))


def build_decoy_pool(count: int, gains: PIGains, rng: random.Random,
                     delta: float = fixed_point.DELTA_DEFAULT,
                     value_range: float = RANGE_DEFAULT,
                     allow_single: bool = False) -> DecoyPool:
    """Random pool of `count` compliant tuples within the operating envelope."""
    _check_pool_size(count, allow_single)
    if value_range <= 0:
        raise ValueError("value_range must be positive")
    draw = lambda: (rng.uniform(-value_range, value_range),
                    rng.uniform(-value_range, value_range))
    return DecoyPool(tuples=tuple(
        make_decoy(x_c=draw(), y=draw(), r=draw(), gains=gains, delta=delta)
        for _ in range(count)
    ))


def save_pool(path: str | Path, pool: DecoyPool) -> None:
    """One tuple per line: u(2), x_c_plus(2), x_c(2), y(2), r(2)."""
    lines = ["# u1 u2 xcp1 xcp2 xc1 xc2 y1 y2 r1 r2"]
    lines += [" ".join(repr(s) for s in t.scalars()) for t in pool.tuples]
    Path(path).write_text("\n".join(lines) + "\n")


def load_pool(path: str | Path, gains: PIGains, delta: float,
              allow_single: bool = False) -> DecoyPool:
    """Load and validate a pool file (see save_pool for the record layout)."""
    tuples: list[DecoyTuple] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 10:
            raise ValueError(f"{path}:{lineno}: expected 10 scalars, got {len(parts)}")
        vals = [float(p) for p in parts]
        tup = DecoyTuple(u=(vals[0], vals[1]), x_c_plus=(vals[2], vals[3]),
                         x_c=(vals[4], vals[5]), y=(vals[6], vals[7]),
                         r=(vals[8], vals[9]))
        check_compliance(tup, gains, delta)
        tuples.append(tup)
    _check_pool_size(len(tuples), allow_single)
    return DecoyPool(tuples=tuple(tuples))


def prepare_pool(pool: DecoyPool, pk: paillier.PublicKey, delta: float) -> PreparedPool:
    """Bind a pool to a key: quantize inputs at delta, expectations at delta**2."""
    n = pk.n
    delta_sq = delta * delta
    decoys = []
    for t in pool.tuples:
        decoys.append(PreparedDecoy(
            inputs_l1=(
                tuple(fixed_point.encode_residue(s, delta, n) for s in t.x_c),
                tuple(fixed_point.encode_residue(s, delta, n) for s in t.y),
                tuple(fixed_point.encode_residue(s, delta, n) for s in t.r),
            ),
            expected_u_l2=tuple(
                fixed_point.encode_residue(s, delta_sq, n) for s in t.u),
            expected_x_c_plus_l2=tuple(
                fixed_point.encode_residue(s, delta_sq, n) for s in t.x_c_plus),
        ))
    return PreparedPool(decoys=tuple(decoys))


def select_and_assemble(pool: PreparedPool, n_d: int,
                        real_triple: tuple[IntPair, IntPair, IntPair],
                        pk: paillier.PublicKey, rng: random.Random,
                        k: int) -> tuple[BatchPlan, "protocol.StepRequest"]:
    """Draw n_d decoys, permute them with the real column, encrypt everything.

    `real_triple` holds the real (x_c, y, r) residues at scale delta.  With
    n_d = 0 the request degenerates to the single real column (no decoys, no
    verification coverage).
    """
    from . import protocol  # deferred: protocol imports nothing from here

    if n_d < 0:
        raise ValueError("n_d must be nonnegative")
    if n_d > 0 and len(pool) == 0:
        raise ValueError("decoy pool is empty")
    selection = tuple(rng.randrange(len(pool)) for _ in range(n_d))
    omega = list(range(n_d + 1))
    rng.shuffle(omega)

    triples = [real_triple] + [pool.decoys[i].inputs_l1 for i in selection]
    slots: list[tuple[IntPair, IntPair, IntPair] | None] = [None] * (n_d + 1)
    for src, dst in enumerate(omega):
        slots[dst] = triples[src]
    columns = [
        protocol.RequestColumn(
            x_c=tuple(paillier.encrypt(pk, s, rng) for s in triple[0]),
            y=tuple(paillier.encrypt(pk, s, rng) for s in triple[1]),
            r=tuple(paillier.encrypt(pk, s, rng) for s in triple[2]),
        )
        for triple in slots
    ]
    plan = BatchPlan(omega=tuple(omega), selection=selection)
    return plan, protocol.StepRequest(k=k, columns=tuple(columns))


def verify_response(columns: list[tuple[IntPair, IntPair]], plan: BatchPlan,
                    pool: PreparedPool) -> VerificationResult:
    """Check every decoy slot of a decrypted response against expectations.

    `columns` holds per-slot (u, x_c_plus) residues at scale delta**2, in
    wire order.  Only decoy slots are inspected; the real column is extracted
    untouched.  Comparisons are exact integer equality — the encrypted
    pipeline is deterministic, so any deviation is tampering.
    """
    if len(columns) != len(plan.omega):
        raise ValueError(
            f"response has {len(columns)} columns, request had {len(plan.omega)}"
        )
    failed = []
    for decoy_idx, pool_idx in enumerate(plan.selection):
        slot = plan.omega[decoy_idx + 1]
        got_u, got_x_c_plus = columns[slot]
        expected = pool.decoys[pool_idx]
        if got_u != expected.expected_u_l2 or \
                got_x_c_plus != expected.expected_x_c_plus_l2:
            failed.append(slot)
    if failed:
        return VerificationResult(verdict="fail", failed_slots=tuple(sorted(failed)),
                                  real_u=None, real_x_c_plus=None)
    real_u, real_x_c_plus = columns[plan.real_slot]
    return VerificationResult(verdict="pass", failed_slots=(),
                              real_u=real_u, real_x_c_plus=real_x_c_plus)


def survival_probability(n_d: int, k: int) -> float:
    """Probability a column-guessing attacker stays undetected through steps 0..k."""
    if n_d < 1:
        raise ValueError("n_d must be at least 1")
    if k < 0:
        raise ValueError("k must be nonnegative")
    return (1.0 / (n_d + 1)) ** (k + 1)
