"""Verifiable encrypted control over Paillier ciphertexts.

A plant runs a tracking loop whose PI controller is evaluated in the cloud on
encrypted data.  To catch a tampering cloud, the plant mixes precomputed decoy
columns into every request under a random permutation and checks the decoy
slots of each response exactly; any mismatch halts the plant.  An attacker who
cannot tell decoys from real data survives k steps with probability
(1/(n_d+1))^(k+1).

Modules: `paillier` (cryptosystem), `fixed_point` (quantization), `robot`
(plant model, reference path, plaintext PI law), `decoy` (pool, batch
assembly, verification), `protocol` (wire format and transports), `cloud`
(encrypted controller service), `attacks` (adversary policies), `runtime`
(plant loop), `harness` (Monte Carlo and benchmarks), `oracle` (independent
test references), `cli` (command line).
"""

__version__ = "0.1.0"
