"""cpschain: certificateless multi-signature security framework for
cyber-physical systems — deterministic library and simulator.

Subpackages and modules:

- ``mscrypto``: pairing-based signature core (keys, BLS multi-signatures,
  proof of possession, certificateless key combination).
- ``registry``: threshold-cosigned device registration protocol.
- ``ledger``: endorsement, MVCC validation, hash-linked block commit.
- ``ordering``: PBFT/CFT consensus and gossip over a deterministic
  tick simulation.
- ``dhtstore``: Kademlia-style content-addressed off-chain storage.
- ``bench``: workload generation, metrics, CSV/SVG reporting.
- ``service``: FastAPI application exposing node operations.
- ``cli``: command-line client driving the service in-process.
"""

__version__ = "0.1.0"
