"""Adversary strategies pluggable into the cloud controller.

Every policy is value-blind: it sees only ciphertexts and the public key, and
copies are always rerandomized, so the plant can never spot an attack by
comparing ciphertext bytes.  Detection, when it happens, comes entirely from
the decoy verification on the plant side.

Kinds:
  replay               evaluate only the first received column, return
                       rerandomized copies of its outputs in every column
  guess_and_tamper     evaluate honestly, pick one column uniformly at
                       random, apply a tamper transform to it alone
  constant_decoy_replay at activation, record the honest outputs of one
                       uniformly guessed column; from then on answer every
                       column of every step with rerandomized copies of the
                       recording (the degenerate single-decoy-pool exploit)
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from . import paillier
from .paillier import PublicKey
from .protocol import RequestColumn, ResponseColumn, StepRequest, StepResponse

KINDS = ("replay", "guess_and_tamper", "constant_decoy_replay")

TamperFn = Callable[[ResponseColumn, PublicKey], ResponseColumn]
EvalFn = Callable[[RequestColumn], ResponseColumn]

DEFAULT_TAMPER_FACTOR = 2


def scale_u(factor: int) -> TamperFn:
    """Tamper transform multiplying the control input by a plaintext factor."""

    def tamper(col: ResponseColumn, pk: PublicKey) -> ResponseColumn:
        return ResponseColumn(
            u=(paillier.mul_plain(pk, col.u[0], factor),
               paillier.mul_plain(pk, col.u[1], factor)),
            x_c_plus=col.x_c_plus,
        )

    return tamper


@dataclass(frozen=True)
class AttackPolicy:
    kind: str
    k_a: int = 0
    transform: TamperFn | None = None       # guess_and_tamper only
    recorded: ResponseColumn | None = None  # constant_decoy_replay seed

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}; expected one of {KINDS}")
        if self.k_a < 0:
            raise ValueError("activation step k_a must be nonnegative")


def substitute(transform: TamperFn, k_a: int = 0) -> AttackPolicy:
    """Generic integrity attack: guess the real column, apply `transform` to it."""
    return AttackPolicy(kind="guess_and_tamper", k_a=k_a, transform=transform)


@dataclass
class AttackState:
    """Per-session mutable attacker memory."""

    recorded: ResponseColumn | None = None
    rng: random.Random = field(default_factory=random.Random)


def _rerandomized(col: ResponseColumn, pk: PublicKey, rng: random.Random) -> ResponseColumn:
    return ResponseColumn(
        u=(paillier.rerandomize(pk, col.u[0], rng),
           paillier.rerandomize(pk, col.u[1], rng)),
        x_c_plus=(paillier.rerandomize(pk, col.x_c_plus[0], rng),
                  paillier.rerandomize(pk, col.x_c_plus[1], rng)),
    )


def apply_policy(policy: AttackPolicy, state: AttackState, req: StepRequest,
                 eval_column: EvalFn, pk: PublicKey) -> StepResponse:
    """Produce the (possibly tampered) response for one request."""
    if req.k < policy.k_a:
        return StepResponse(k=req.k, columns=tuple(
            eval_column(col) for col in req.columns))

    rng = state.rng
    if policy.kind == "replay":
        first = eval_column(req.columns[0])
        columns = tuple(_rerandomized(first, pk, rng) for _ in req.columns)
    elif policy.kind == "guess_and_tamper":
        transform = policy.transform or scale_u(DEFAULT_TAMPER_FACTOR)
        columns_list = [eval_column(col) for col in req.columns]
        guess = rng.randrange(len(columns_list))
        columns_list[guess] = transform(columns_list[guess], pk)
        columns = tuple(columns_list)
    elif policy.kind == "constant_decoy_replay":
        if state.recorded is None:
            if policy.recorded is not None:
                state.recorded = policy.recorded
            else:
                guess = rng.randrange(len(req.columns))
                state.recorded = eval_column(req.columns[guess])
        columns = tuple(_rerandomized(state.recorded, pk, rng) for _ in req.columns)
    else:  # unreachable given AttackPolicy validation
        raise AssertionError(policy.kind)
    return StepResponse(k=req.k, columns=columns)
