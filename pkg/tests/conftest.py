"""Shared fixtures: small deterministic keypairs and decoy pools.

Expensive artifacts (keypairs) are session-scoped; everything that consumes
them treats them as read-only.
"""

import random

import pytest

from decoyctl import decoy, paillier


@pytest.fixture(scope="session")
def tiny_keys():
    """The worked-example keypair p=5, q=7 (n=35)."""
    return paillier.keypair_from_primes(5, 7)


@pytest.fixture(scope="session")
def small_keys():
    """A 64-bit-modulus keypair, large enough for quantized control values."""
    return paillier.keygen(prime_bits=32, rng=random.Random("tests/keys/64"))


@pytest.fixture(scope="session")
def medium_keys():
    """A 128-bit-modulus keypair for protocol-level tests."""
    return paillier.keygen(prime_bits=64, rng=random.Random("tests/keys/128"))


@pytest.fixture(scope="session")
def big_keys():
    """A production-sized 1024-bit-modulus keypair (generated once per run)."""
    return paillier.keygen(prime_bits=512, rng=random.Random("tests/keys/1024"))


@pytest.fixture()
def builtin_pool():
    return decoy.builtin_pool()
