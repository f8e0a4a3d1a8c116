"""Paillier cryptosystem: randomized, additively homomorphic encryption over Z_n.

Supports encrypted addition of two ciphertexts and multiplication of a
ciphertext by a plaintext integer.  Big-integer arithmetic is delegated to
gmpy2 (powmod/invert/is_prime); everything else is plain Python ints so key
material and ciphertexts serialize and compare naturally.

Not hardened against side channels: the threat model is a remote party
tampering with the control logic, not a local observer of the arithmetic.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

import gmpy2

# Residues modulo n^2; plain ints on the wire and in messages.
Ciphertext = int

MIN_PRIME_BITS = 16
MILLER_RABIN_ROUNDS = 40
# Expected ~ bits/ln(4) candidates per prime; this is two orders above that.
_MAX_PRIME_ATTEMPTS = 200_000


class MalformedCiphertext(ValueError):
    """Ciphertext value is not an invertible residue modulo n^2."""


@dataclass(frozen=True)
class PublicKey:
    n: int

    @property
    def n_sq(self) -> int:
        return self.n * self.n

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def cipher_bytes(self) -> int:
        """Fixed serialized width of one ciphertext: the byte length of n^2."""
        return (self.n_sq.bit_length() + 7) // 8

    def to_bytes(self) -> bytes:
        return self.n.to_bytes((self.n.bit_length() + 7) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicKey":
        return cls(int.from_bytes(data, "big"))


@dataclass(frozen=True)
class SecretKey:
    p: int
    q: int
    lam: int  # lcm(p-1, q-1)
    mu: int   # inverse of L(g^lam mod n^2) modulo n


def _random_prime(bits: int, rng: random.Random) -> int:
    """Random prime of exactly `bits` bits (top and bottom bits forced)."""
    for _ in range(_MAX_PRIME_ATTEMPTS):
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if gmpy2.is_prime(candidate, MILLER_RABIN_ROUNDS):
            return candidate
    raise RuntimeError(
        f"no {bits}-bit prime found after {_MAX_PRIME_ATTEMPTS} candidates; "
        "randomness source looks broken"
    )


def keygen(prime_bits: int = 512, rng: random.Random | None = None) -> tuple[PublicKey, SecretKey]:
    """Generate a key pair with two distinct primes of `prime_bits` bits each."""
    if prime_bits < MIN_PRIME_BITS:
        raise ValueError(f"prime_bits must be >= {MIN_PRIME_BITS}, got {prime_bits}")
    if rng is None:
        rng = random.SystemRandom()
    p = _random_prime(prime_bits, rng)
    q = _random_prime(prime_bits, rng)
    while q == p:
        q = _random_prime(prime_bits, rng)
    return keypair_from_primes(p, q)


def keypair_from_primes(p: int, q: int) -> tuple[PublicKey, SecretKey]:
    """Assemble a key pair from given primes (allows tiny keys for tests)."""
    if p == q:
        raise ValueError("p and q must differ")
    if not (gmpy2.is_prime(p, MILLER_RABIN_ROUNDS) and gmpy2.is_prime(q, MILLER_RABIN_ROUNDS)):
        raise ValueError("p and q must both be prime")
    n = p * q
    n_sq = n * n
    lam = math.lcm(p - 1, q - 1)
    # g = n+1, so L(g^lam mod n^2) = lam mod n; keep the generic formula anyway.
    u = int(gmpy2.powmod(n + 1, lam, n_sq))
    mu = int(gmpy2.invert((u - 1) // n, n))
    return PublicKey(n), SecretKey(p=p, q=q, lam=lam, mu=mu)


def random_nonce(pk: PublicKey, rng: random.Random) -> int:
    """Uniform r in [1, n) with gcd(r, n) = 1."""
    while True:
        r = rng.randrange(1, pk.n)
        if math.gcd(r, pk.n) == 1:
            return r


def encrypt(pk: PublicKey, m: int, rng: random.Random | None = None,
            nonce: int | None = None) -> Ciphertext:
    """Encrypt m in [0, n): (1 + m*n) * r^n mod n^2."""
    if not 0 <= m < pk.n:
        raise ValueError(f"plaintext {m} outside [0, n)")
    if nonce is None:
        if rng is None:
            raise ValueError("either rng or nonce is required")
        nonce = random_nonce(pk, rng)
    elif not 1 <= nonce < pk.n or math.gcd(nonce, pk.n) != 1:
        raise ValueError("nonce must lie in [1, n) and be coprime with n")
    n_sq = pk.n_sq
    return int((1 + m * pk.n) * gmpy2.powmod(nonce, pk.n, n_sq) % n_sq)


def decrypt(sk: SecretKey, pk: PublicKey, c: Ciphertext) -> int:
    """Recover the plaintext: L(c^lam mod n^2) * mu mod n."""
    n_sq = pk.n_sq
    if not 1 <= c < n_sq or math.gcd(c, n_sq) != 1:
        raise MalformedCiphertext(f"value {c} is not a unit modulo n^2")
    u = int(gmpy2.powmod(c, sk.lam, n_sq))
    return (u - 1) // pk.n * sk.mu % pk.n


def add_enc(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """Homomorphic addition: decrypts to (m1 + m2) mod n."""
    n_sq = pk.n_sq
    if not (1 <= c1 < n_sq and 1 <= c2 < n_sq):
        raise MalformedCiphertext("ciphertext outside [1, n^2); wrong key?")
    return c1 * c2 % n_sq

def mul_plain(pk: PublicKey, c: Ciphertext, k: int) -> Ciphertext:
    """Plaintext multiplication: decrypts to (k * m) mod n."""
    if not 0 <= k < pk.n:
        raise ValueError(f"plaintext factor {k} outside [0, n)")
    return int(gmpy2.powmod(c, k, pk.n_sq))


def rerandomize(pk: PublicKey, c: Ciphertext, rng: random.Random) -> Ciphertext:
    """Fresh ciphertext of the same plaintext (multiply by an encryption of 0)."""
    n_sq = pk.n_sq
    if not 1 <= c < n_sq:
        raise MalformedCiphertext("ciphertext outside [1, n^2)")
    r = random_nonce(pk, rng)
    return int(c * gmpy2.powmod(r, pk.n, n_sq) % n_sq)


def cipher_to_bytes(pk: PublicKey, c: Ciphertext) -> bytes:
    """Big-endian bytes, zero-padded to the fixed width of n^2."""
    return c.to_bytes(pk.cipher_bytes, "big")


def cipher_from_bytes(data: bytes) -> Ciphertext:
    return int.from_bytes(data, "big")


def save_keypair(path, pk: PublicKey, sk: SecretKey) -> None:
    """Write the key pair (including the secret primes) as JSON."""
    data = {"p": sk.p, "q": sk.q, "prime_bits": sk.p.bit_length()}
    with open(path, "w") as fh:
        json.dump(data, fh)
        fh.write("\n")


def load_keypair(path) -> tuple[PublicKey, SecretKey]:
    with open(path) as fh:
        data = json.load(fh)
    try:
        return keypair_from_primes(int(data["p"]), int(data["q"]))
    except KeyError as exc:
        raise ValueError(f"key file {path} is missing field {exc}") from exc
