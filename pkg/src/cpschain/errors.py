"""Exception taxonomy shared across the framework.

Every protocol failure has a dedicated class so callers (and the CLI
exit-code mapping) can dispatch on type rather than parse messages.
"""

from __future__ import annotations


class CpschainError(Exception):
    """Base class for all framework errors."""


class WireError(CpschainError):
    """Malformed canonical byte encoding."""


# --- signature core -------------------------------------------------------

class EmptyAggregate(CpschainError):
    """Aggregation over an empty signature list."""


class RogueKeyRejected(CpschainError):
    """A public key failed its proof-of-possession check."""

    def __init__(self, index: int):
        super().__init__(f"public key at index {index} has no valid proof of possession")
        self.index = index


class BitmapMismatch(CpschainError):
    """Multi-signature bitmap length differs from the roster length."""


class DegenerateKey(CpschainError):
    """Combined secret collapsed to zero; caller must re-randomize."""


# --- registration protocol ------------------------------------------------

class InsufficientQuorumTargets(CpschainError):
    """Registration request targets fewer peers than the threshold."""


class AuthFailure(CpschainError):
    """Ciphertext failed authenticated decryption."""


class ReplayRejected(CpschainError):
    """Nonce already seen by this peer."""


class ThresholdUnmet(CpschainError):
    """Fewer valid partial-secret shares than the threshold."""

    def __init__(self, count: int):
        super().__init__(f"only {count} valid shares, below threshold")
        self.count = count


class AttestationInvalid(CpschainError):
    """Bundle attestation does not verify against the claimed cosigners."""


class ShareMismatch(CpschainError):
    """Decrypted partial-secret scalar does not match its public share."""


# --- ledger ---------------------------------------------------------------

class InvalidAction(CpschainError):
    """Unknown action, or payload inconsistent with the action type."""


class PolicyUnmet(CpschainError):
    """Not enough YES endorsements to satisfy the policy."""

    def __init__(self, yes_count: int):
        super().__init__(f"only {yes_count} YES endorsements")
        self.yes_count = yes_count


class DigestDivergence(CpschainError):
    """Endorsing peers disagree on the simulated read/write sets."""


class AclDenied(CpschainError):
    """Device is not permitted to perform this action."""


class KeyNotFound(CpschainError):
    """State key absent from the world state."""


class BrokenChain(CpschainError):
    """Hash link or structural check failed on a block chain."""


class QuorumInvalid(CpschainError):
    """Block commit signatures do not form a valid ordering quorum."""


# --- ordering / consensus -------------------------------------------------

class QueueFull(CpschainError):
    """Ordering node queue is at capacity; submission rejected."""


class NoProgress(CpschainError):
    """Consensus exhausted its view-change budget without deciding."""


class NoQuorum(CpschainError):
    """Too many nodes crashed for the protocol to make progress."""


class DivergentHistory(CpschainError):
    """Two chains share a height but disagree on the block."""


# --- DHT storage ----------------------------------------------------------

class BootstrapUnreachable(CpschainError):
    """Join failed because the bootstrap node did not respond."""


class PayloadTooLarge(CpschainError):
    """Payload exceeds the configured DHT maximum."""


class NotFound(CpschainError):
    """No replica holds the requested content address."""


class IntegrityFailure(CpschainError):
    """Stored bytes do not hash to their content address."""


# --- configuration / reporting -------------------------------------------

class ConfigInvalid(CpschainError):
    """Scenario configuration failed validation."""

    def __init__(self, message: str, field_path: str = ""):
        super().__init__(message)
        self.field_path = field_path


class IoFailure(CpschainError):
    """Filesystem error while writing a report artifact."""


class EmptyReport(CpschainError):
    """Chart rendering requested for a report with no data."""
