"""Multi-signature scheme on the pairing curve.

Keys, single BLS signatures (signatures in G1, public keys in G2),
same-message multi-signature aggregation with proof-of-possession
rogue-key defense, identity-scalar derivation, and certificateless key
combination. All operations are pure functions over immutable values;
all randomness enters through caller-supplied seeds, so identical
inputs produce bit-identical outputs.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from functools import lru_cache

from ..errors import (
    BitmapMismatch,
    DegenerateKey,
    EmptyAggregate,
    RogueKeyRejected,
    WireError,
)
from ..wire import ByteReader, ByteWriter
from . import bls12381 as curve

SCALAR_BYTES = 32
SEED_BYTES = 32

GROUP_ORDER = int(curve.R)


def _derive_scalar(key: bytes, label: bytes, ctx: bytes) -> int:
    """Deterministic nonzero scalar in [1, q-1] via keyed KDF.

    The 512-bit HMAC output makes the mod-q bias negligible; the
    counter retry for a zero result never fires in practice but keeps
    the function total.
    """
    for ctr in range(256):
        digest = hmac.new(
            key, label + ctr.to_bytes(4, "big") + ctx, hashlib.sha512
        ).digest()
        candidate = int.from_bytes(digest, "big") % GROUP_ORDER
        if candidate:
            return candidate
    raise ValueError("scalar derivation failed")  # cryptographically unreachable


# --- domain types --------------------------------------------------------------


@dataclass(frozen=True)
class SystemParams:
    """Shared scheme parameters: curve, generators, domain-separation tags."""

    curve_id: str
    g1: tuple
    g2: tuple
    dst_sig: bytes
    dst_pop: bytes
    dst_id: bytes

    def __post_init__(self):
        tags = (self.dst_sig, self.dst_pop, self.dst_id)
        if len(set(tags)) != 3:
            raise ValueError("domain-separation tags must be pairwise distinct")

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.blob(self.curve_id.encode())
        w.raw(curve.g1_to_bytes(self.g1))
        w.raw(curve.g2_to_bytes(self.g2))
        w.blob(self.dst_sig)
        w.blob(self.dst_pop)
        w.blob(self.dst_id)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SystemParams":
        r = ByteReader(data)
        curve_id = r.blob().decode()
        g1 = curve.g1_from_bytes(r.raw(48))
        g2 = curve.g2_from_bytes(r.raw(96))
        params = cls(curve_id, g1, g2, r.blob(), r.blob(), r.blob())
        r.expect_eof()
        if curve.g1_is_inf(g1) or curve.g2_is_inf(g2):
            raise WireError("generators must not be the identity")
        return params


@dataclass(frozen=True)
class SecretKey:
    """Scalar in [1, q-1]. Never appears in attestations, blocks or reports."""

    scalar: int

    def __post_init__(self):
        if not 1 <= self.scalar < GROUP_ORDER:
            raise ValueError("secret scalar out of range")

    def to_bytes(self) -> bytes:
        return self.scalar.to_bytes(SCALAR_BYTES, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecretKey":
        if len(data) != SCALAR_BYTES:
            raise WireError(f"secret key must be {SCALAR_BYTES} bytes")
        value = int.from_bytes(data, "big")
        if not 1 <= value < GROUP_ORDER:
            raise WireError("secret scalar out of range")
        return cls(value)


@dataclass(frozen=True)
class PublicKey:
    """G2 point in the prime-order subgroup (normalized Jacobian form)."""

    point: tuple

    def to_bytes(self) -> bytes:
        return curve.g2_to_bytes(self.point)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicKey":
        return cls(curve.g2_from_bytes(data))

    def is_identity(self) -> bool:
        return curve.g2_is_inf(self.point)


@dataclass(frozen=True)
class Signature:
    """G1 point in the prime-order subgroup (normalized Jacobian form)."""

    point: tuple

    def to_bytes(self) -> bytes:
        return curve.g1_to_bytes(self.point)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signature":
        return cls(curve.g1_from_bytes(data))


@dataclass(frozen=True)
class ProofOfPossession:
    """Self-signature over the owner's serialized public key."""

    sig: Signature

    def to_bytes(self) -> bytes:
        return self.sig.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProofOfPossession":
        return cls(Signature.from_bytes(data))


@dataclass(frozen=True)
class MultiSignature:
    """Aggregate signature plus the bitmap of contributing roster slots."""

    agg_sig: Signature
    signer_bitmap: tuple[bool, ...]

    def popcount(self) -> int:
        return sum(self.signer_bitmap)

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.raw(self.agg_sig.to_bytes())
        w.u32(len(self.signer_bitmap))
        packed = bytearray((len(self.signer_bitmap) + 7) // 8)
        for i, flag in enumerate(self.signer_bitmap):
            if flag:
                packed[i // 8] |= 0x80 >> (i % 8)
        w.raw(bytes(packed))
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "MultiSignature":
        r = ByteReader(data)
        sig = Signature.from_bytes(r.raw(48))
        n = r.u32()
        packed = r.raw((n + 7) // 8)
        r.expect_eof()
        bitmap = tuple(bool(packed[i // 8] & (0x80 >> (i % 8))) for i in range(n))
        if n % 8 and packed[-1] & ((1 << (8 - n % 8)) - 1):
            raise WireError("nonzero padding bits in signer bitmap")
        return cls(sig, bitmap)


def default_params() -> SystemParams:
    return SystemParams(
        curve_id="BLS12-381",
        g1=curve.G1_GEN,
        g2=curve.G2_GEN,
        dst_sig=b"CPSCHAIN-V1-SIG",
        dst_pop=b"CPSCHAIN-V1-POP",
        dst_id=b"CPSCHAIN-V1-ID",
    )


DEFAULT_PARAMS = default_params()


# --- core operations ------------------------------------------------------------


def keygen(
    params: SystemParams, seed: bytes
) -> tuple[SecretKey, PublicKey, ProofOfPossession]:
    """Derive a keypair and its proof of possession from a 32-byte seed."""
    if len(seed) != SEED_BYTES:
        raise ValueError(f"seed must be {SEED_BYTES} bytes, got {len(seed)}")
    sk = SecretKey(_derive_scalar(seed, b"keygen", params.curve_id.encode()))
    pk = PublicKey(curve.g2_normalize(curve.g2_mul(params.g2, sk.scalar)))
    pop = ProofOfPossession(_sign_with_dst(sk, pk.to_bytes(), params.dst_pop))
    return sk, pk, pop


def _sign_with_dst(sk: SecretKey, msg: bytes, dst: bytes) -> Signature:
    h = curve.hash_to_g1(msg, dst)
    return Signature(curve.g1_normalize(curve.g1_mul(h, sk.scalar)))


def sign(sk: SecretKey, msg: bytes, params: SystemParams) -> Signature:
    """BLS signature: sk * H1(msg) in G1."""
    return _sign_with_dst(sk, msg, params.dst_sig)


@lru_cache(maxsize=4096)
def _prepared(g2_point):
    return curve.prepare_g2(g2_point)


@lru_cache(maxsize=256)
def _neg_prepared(g2_point):
    return curve.prepare_g2(curve.g2_neg(g2_point))


@lru_cache(maxsize=65536)
def _verify_points(pk_point, msg: bytes, sig_point, dst: bytes, g2_point) -> bool:
    # Pure function of its arguments, so process-wide memoization is
    # sound; it turns the repeated verifications done by every peer in
    # a simulation into a single pairing computation.
    if curve.g2_is_inf(pk_point):
        return False
    h = curve.hash_to_g1(msg, dst)
    return curve.pairing_check(
        [(sig_point, _neg_prepared(g2_point)), (h, _prepared(pk_point))]
    )


def _verify_with_dst(
    pk: PublicKey, msg: bytes, sig: Signature, dst: bytes, g2
) -> bool:
    return _verify_points(pk.point, bytes(msg), sig.point, dst, g2)


def verify(pk: PublicKey, msg: bytes, sig: Signature, params: SystemParams) -> bool:
    """Pairing check e(sig, g2) == e(H1(msg), pk); identity pk verifies nothing."""
    return _verify_with_dst(pk, msg, sig, params.dst_sig, params.g2)


def verify_pop(pk: PublicKey, pop: ProofOfPossession, params: SystemParams) -> bool:
    """Check that pop is pk's self-signature under the PoP tag."""
    return _verify_with_dst(pk, pk.to_bytes(), pop.sig, params.dst_pop, params.g2)


def aggregate_signatures(sigs: list[Signature]) -> Signature:
    """Group sum of signature points (same-message aggregation)."""
    if not sigs:
        raise EmptyAggregate("cannot aggregate zero signatures")
    acc = curve.G1_INF
    for sig in sigs:
        acc = curve.g1_add(acc, sig.point)
    return Signature(curve.g1_normalize(acc))


def aggregate_public_keys(
    pks: list[tuple[PublicKey, ProofOfPossession]], params: SystemParams
) -> PublicKey:
    """Group sum of public keys; every key must prove possession first."""
    if not pks:
        raise EmptyAggregate("cannot aggregate zero public keys")
    acc = curve.G2_INF
    for index, (pk, pop) in enumerate(pks):
        if not verify_pop(pk, pop, params):
            raise RogueKeyRejected(index)
        acc = curve.g2_add(acc, pk.point)
    return PublicKey(curve.g2_normalize(acc))


def verify_multisig(
    roster: list[PublicKey], ms: MultiSignature, msg: bytes, params: SystemParams
) -> bool:
    """Verify the aggregate signature against the bitmap-flagged roster keys.

    Roster keys are assumed PoP-checked at admission time (see
    aggregate_public_keys); this only sums the flagged subset.
    """
    if len(ms.signer_bitmap) != len(roster):
        raise BitmapMismatch(
            f"bitmap covers {len(ms.signer_bitmap)} slots, roster has {len(roster)}"
        )
    if not any(ms.signer_bitmap):
        return False
    acc = curve.G2_INF
    for pk, flagged in zip(roster, ms.signer_bitmap):
        if flagged:
            acc = curve.g2_add(acc, pk.point)
    agg_pk = PublicKey(curve.g2_normalize(acc))
    return verify(agg_pk, msg, ms.agg_sig, params)


def hash_to_identity_scalar(
    identity: bytes, peer_secret: SecretKey, params: SystemParams
) -> int:
    """Per-peer deterministic partial-secret contribution d_i in [1, q-1]."""
    return _derive_scalar(peer_secret.to_bytes(), params.dst_id, bytes(identity))


def combine_keys(
    device_sk: SecretKey, partial: int, params: SystemParams
) -> tuple[SecretKey, PublicKey]:
    """Certificateless combination: sk_full = (x + d) mod q, pk_full = sk_full * g2."""
    if not 1 <= partial < GROUP_ORDER:
        raise ValueError("partial secret out of range")
    total = (device_sk.scalar + partial) % GROUP_ORDER
    if total == 0:
        raise DegenerateKey("combined secret is zero; re-randomize the device key")
    sk_full = SecretKey(total)
    pk_full = PublicKey(curve.g2_normalize(curve.g2_mul(params.g2, total)))
    return sk_full, pk_full
