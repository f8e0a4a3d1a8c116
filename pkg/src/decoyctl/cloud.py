"""Cloud-side encrypted PI controller service.

Evaluates the controller law column by column on ciphertexts: with the
session's plaintext gain grids V (state update) and Z (output), each response
entry is the homomorphic dot product of a grid row with the received column,
ordered v = (x_c, r, y).  The service is stateless across columns and steps —
the controller state lives encrypted on the plant side and is resent each
step — so honest responses depend only on the received column.

This module never sees a secret key.  An installed attack policy routes
requests through `attacks.apply_policy` from its activation step onward.
"""

from __future__ import annotations

import argparse
import random
import socket
import sys
import threading

from . import attacks, paillier
from .protocol import (
    Codec,
    HaltNotice,
    ProtocolError,
    RequestColumn,
    ResponseColumn,
    SessionSetup,
    StepRequest,
    StepResponse,
    TransportError,
    read_frame,
    write_frame,
)


class CloudService:
    """One controller session: configured by a setup message, then serves steps."""

    def __init__(self, rng: random.Random | None = None):
        self.setup: SessionSetup | None = None
        self.policy: attacks.AttackPolicy | None = None
        self.attack_state = attacks.AttackState(rng=rng or random.Random())
        self.halt_step: int | None = None

    def install_attack(self, policy: attacks.AttackPolicy) -> None:
        if self.policy is not None:
            raise RuntimeError("an attack policy is already installed")
        self.policy = policy

    def configure(self, setup: SessionSetup) -> None:
        self.setup = setup

    def eval_column(self, col: RequestColumn) -> ResponseColumn:
        """Honest encrypted evaluation of one column."""
        if self.setup is None:
            raise ProtocolError("step request before session setup")
        pk = self.setup.public_key
        v = (*col.x_c, *col.r, *col.y)

        def dot(row: tuple[int, ...]) -> paillier.Ciphertext:
            acc = None
            for gain, cipher in zip(row, v):
                term = paillier.mul_plain(pk, cipher, gain)
                acc = term if acc is None else paillier.add_enc(pk, acc, term)
            return acc

        x_c_plus = (dot(self.setup.v_grid[0]), dot(self.setup.v_grid[1]))
        u = (dot(self.setup.z_grid[0]), dot(self.setup.z_grid[1]))
        return ResponseColumn(u=u, x_c_plus=x_c_plus)

    def handle_request(self, req: StepRequest) -> StepResponse:
        if self.setup is None:
            raise ProtocolError("step request before session setup")
        if self.policy is not None:
            return attacks.apply_policy(self.policy, self.attack_state, req,
                                        self.eval_column, self.setup.public_key)
        return StepResponse(k=req.k, columns=tuple(
            self.eval_column(col) for col in req.columns))

    def handle_halt(self, halt: HaltNotice) -> None:
        self.halt_step = halt.k


def serve_connection(conn: socket.socket, service: CloudService) -> None:
    """Serve one plant session on an accepted connection until halt or EOF."""
    codec = Codec()
    while True:
        try:
            frame = read_frame(conn)
        except TransportError:
            return  # plant went away; session over
        msg = codec.decode(frame)
        if isinstance(msg, SessionSetup):
            codec.bind(msg.public_key)
            service.configure(msg)
        elif isinstance(msg, StepRequest):
            write_frame(conn, codec.encode(service.handle_request(msg)))
        elif isinstance(msg, HaltNotice):
            service.handle_halt(msg)
            return
        else:
            raise ProtocolError(f"unexpected {type(msg).__name__} from plant")


def serve(host: str, port: int, service_factory, sessions: int | None = 1,
          ready: threading.Event | None = None,
          bound_port: list[int] | None = None) -> None:
    """Accept plant connections; one service instance per session.

    `sessions=None` serves forever.  `ready`/`bound_port` let tests learn the
    ephemeral port before connecting.
    """
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as listener:
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen(1)
        if bound_port is not None:
            bound_port.append(listener.getsockname()[1])
        if ready is not None:
            ready.set()
        served = 0
        while sessions is None or served < sessions:
            conn, _ = listener.accept()
            with conn:
                serve_connection(conn, service_factory())
            served += 1


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="decoyctl-cloud",
                     description="Serve the encrypted PI controller over TCP.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9401)
    parser.add_argument("--sessions", type=int, default=None,
                        help="serve this many sessions then exit (default: forever)")
    parser.add_argument("--attack", choices=attacks.KINDS, default=None)
    parser.add_argument("--k-a", type=int, default=0,
                        help="attack activation step (default 0)")
    parser.add_argument("--tamper-factor", type=int, default=attacks.DEFAULT_TAMPER_FACTOR,
                        help="plaintext factor applied to u by guess_and_tamper")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for attack randomness (default: nondeterministic)")
    args = parser.parse_args(argv)

    def service_factory() -> CloudService:
        rng = random.Random(args.seed) if args.seed is not None else random.Random()
        service = CloudService(rng=rng)
        if args.attack is not None:
            transform = None
            if args.attack == "guess_and_tamper":
                transform = attacks.scale_u(args.tamper_factor)
            service.install_attack(attacks.AttackPolicy(
                kind=args.attack, k_a=args.k_a, transform=transform))
        return service

    try:
        serve(args.host, args.port, service_factory, sessions=args.sessions)
    except OSError as exc:
        print(f"decoyctl-cloud: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
