"""Certificateless device registration protocol.

A device generates its own secret x, sends an encrypted registration
request to a quorum of consortium peers, and each peer derives a
deterministic partial secret d_i for that device identity. The device
combines x with the sum of the partial secrets into its full key; the
peers' threshold cosignature over the resulting public material is the
only trust anchor — no certificate authority, no certificate object.

Message flow (one round trip plus a cosigning round):

1. device_begin / build_request: device encrypts (device_id, pk_x,
   nonce) to each target peer (hybrid: ephemeral point on G2 + HKDF +
   ChaCha20-Poly1305).
2. peer_issue_share: peer authenticates, rejects replays, derives d_i,
   returns pk_share = d_i*g2 in the clear plus d_i encrypted back to
   the device, all signed.
3. assemble_bundle: validates shares, sums pk_PS, and gathers each
   contributing peer's cosignature over (device_id, pk_x, pk_PS) into
   one multi-signature. Binding pk_x here is what lets a verifier
   detect any tampering with the credential's combined public key.
4. device_finalize: device checks everything, combines keys, and holds
   sk_full; the credential carries only public material.

All randomness is derived from caller-supplied seeds, so a registration
run is bit-reproducible.
"""

from __future__ import annotations

import hashlib
import hmac
from collections import OrderedDict
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from . import mscrypto as ms
from .errors import (
    AttestationInvalid,
    AuthFailure,
    BitmapMismatch,
    InsufficientQuorumTargets,
    ReplayRejected,
    ShareMismatch,
    ThresholdUnmet,
    WireError,
)
from .mscrypto import bls12381 as curve
from .mscrypto.scheme import _derive_scalar
from .wire import ByteReader, ByteWriter

NONCE_BYTES = 16
MAX_DEVICE_ID = 256
SEEN_NONCE_CAPACITY = 4096

_AEAD_NONCE = bytes(12)  # safe: every encryption uses a fresh one-shot key


def default_threshold(n: int) -> int:
    """Consortium default: two thirds, rounded up (matches the BFT quorum)."""
    return -(-2 * n // 3)


# --- hybrid encryption helpers --------------------------------------------------


def _kdf_key(shared_point, context: bytes) -> bytes:
    return hashlib.sha256(b"cpschain-ecies" + curve.g2_to_bytes(shared_point) + context).digest()


def _ecies_encrypt(params, recipient_point, plaintext: bytes, eph_scalar: int, aad: bytes) -> bytes:
    eph_pub = curve.g2_normalize(curve.g2_mul(params.g2, eph_scalar))
    shared = curve.g2_mul(recipient_point, eph_scalar)
    key = _kdf_key(shared, aad)
    ct = ChaCha20Poly1305(key).encrypt(_AEAD_NONCE, plaintext, aad)
    return curve.g2_to_bytes(eph_pub) + ct


def _ecies_decrypt(recipient_scalar: int, blob: bytes, aad: bytes) -> bytes:
    if len(blob) < 96 + 16:
        raise AuthFailure("ciphertext too short")
    try:
        eph_pub = curve.g2_from_bytes(blob[:96])
    except WireError as exc:
        raise AuthFailure(f"bad ephemeral point: {exc}") from exc
    shared = curve.g2_mul(eph_pub, recipient_scalar)
    key = _kdf_key(shared, aad)
    try:
        return ChaCha20Poly1305(key).decrypt(_AEAD_NONCE, blob[96:], aad)
    except InvalidTag as exc:
        raise AuthFailure("ciphertext failed authentication") from exc


# --- canonical protocol messages -------------------------------------------------


def _share_message(device_id: bytes, pk_share_bytes: bytes) -> bytes:
    return ByteWriter().blob(b"reg-share").blob(device_id).raw(pk_share_bytes).getvalue()


def _attest_message(device_id: bytes, pk_x_bytes: bytes, pk_ps_bytes: bytes) -> bytes:
    return (
        ByteWriter()
        .blob(b"reg-attest")
        .blob(device_id)
        .raw(pk_x_bytes)
        .raw(pk_ps_bytes)
        .getvalue()
    )


@dataclass(frozen=True)
class RegistrationRequest:
    device_id: bytes
    encrypted_payloads: tuple[tuple[bytes, bytes], ...]  # (recipient pk bytes, ct)
    pk_x: ms.PublicKey
    nonce: bytes

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.blob(self.device_id)
        w.u32(len(self.encrypted_payloads))
        for pk_bytes, ct in self.encrypted_payloads:
            w.raw(pk_bytes)
            w.blob(ct)
        w.raw(self.pk_x.to_bytes())
        w.raw(self.nonce)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RegistrationRequest":
        r = ByteReader(data)
        device_id = r.blob()
        payloads = tuple((r.raw(96), r.blob()) for _ in range(r.u32()))
        pk_x = ms.PublicKey.from_bytes(r.raw(96))
        nonce = r.raw(NONCE_BYTES)
        r.expect_eof()
        return cls(device_id, payloads, pk_x, nonce)


@dataclass(frozen=True)
class PartialSecretShare:
    peer_id: int
    device_id: bytes
    d_i: bytes  # encrypted to the device
    pk_share: ms.PublicKey
    share_sig: ms.Signature

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.u32(self.peer_id)
        w.blob(self.device_id)
        w.blob(self.d_i)
        w.raw(self.pk_share.to_bytes())
        w.raw(self.share_sig.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PartialSecretShare":
        r = ByteReader(data)
        share = cls(
            r.u32(),
            r.blob(),
            r.blob(),
            ms.PublicKey.from_bytes(r.raw(96)),
            ms.Signature.from_bytes(r.raw(48)),
        )
        r.expect_eof()
        return share


@dataclass(frozen=True)
class PartialSecretBundle:
    device_id: bytes
    bitmap: tuple[bool, ...]
    pk_ps: ms.PublicKey
    attestation: ms.MultiSignature
    shares: tuple[PartialSecretShare, ...]

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.blob(self.device_id)
        w.u32(len(self.bitmap))
        packed = bytearray((len(self.bitmap) + 7) // 8)
        for i, flag in enumerate(self.bitmap):
            if flag:
                packed[i // 8] |= 0x80 >> (i % 8)
        w.raw(bytes(packed))
        w.raw(self.pk_ps.to_bytes())
        w.blob(self.attestation.to_bytes())
        w.u32(len(self.shares))
        for share in self.shares:
            w.blob(share.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PartialSecretBundle":
        r = ByteReader(data)
        device_id = r.blob()
        n = r.u32()
        packed = r.raw((n + 7) // 8)
        bitmap = tuple(bool(packed[i // 8] & (0x80 >> (i % 8))) for i in range(n))
        pk_ps = ms.PublicKey.from_bytes(r.raw(96))
        attestation = ms.MultiSignature.from_bytes(r.blob())
        shares = tuple(PartialSecretShare.from_bytes(r.blob()) for _ in range(r.u32()))
        r.expect_eof()
        return cls(device_id, bitmap, pk_ps, attestation, shares)


@dataclass(frozen=True)
class DeviceCredential:
    device_id: bytes
    pk_full: ms.PublicKey
    bundle: PartialSecretBundle
    issued_at: int

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.blob(self.device_id)
        w.raw(self.pk_full.to_bytes())
        w.blob(self.bundle.to_bytes())
        w.u64(self.issued_at)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DeviceCredential":
        r = ByteReader(data)
        cred = cls(
            r.blob(),
            ms.PublicKey.from_bytes(r.raw(96)),
            PartialSecretBundle.from_bytes(r.blob()),
            r.u64(),
        )
        r.expect_eof()
        return cred


# --- consortium peer --------------------------------------------------------------


@dataclass
class ConsortiumPeer:
    """One consortium member. The seen-nonce set (replay defense) and the
    per-device ephemeral-key cache (needed to cosign what was actually
    requested) are the only mutable state."""

    peer_id: int
    master_secret: ms.SecretKey
    pk: ms.PublicKey
    pop: ms.ProofOfPossession
    roster: list[ms.PublicKey]
    threshold: int
    params: ms.SystemParams
    _seen_nonces: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _device_pkx: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __post_init__(self):
        n = len(self.roster)
        if not 1 <= self.threshold <= n:
            raise ValueError(f"threshold {self.threshold} out of range for {n} peers")
        if not 0 <= self.peer_id < n:
            raise ValueError(f"peer_id {self.peer_id} out of range for {n} peers")

    def _remember(self, cache: OrderedDict, key, value) -> None:
        cache[key] = value
        while len(cache) > SEEN_NONCE_CAPACITY:
            cache.popitem(last=False)

    def issue_share(self, request: RegistrationRequest) -> PartialSecretShare:
        return peer_issue_share(self, request)

    def cosign_bundle(self, device_id: bytes, pk_ps_bytes: bytes) -> ms.Signature:
        """Second-round cosignature binding the ephemeral key this peer saw."""
        pk_x_bytes = self._device_pkx.get(bytes(device_id))
        if pk_x_bytes is None:
            raise AuthFailure("no registration context for this device")
        msg = _attest_message(bytes(device_id), pk_x_bytes, pk_ps_bytes)
        return ms.sign(self.master_secret, msg, self.params)


def make_consortium(
    params: ms.SystemParams, n: int, seed: bytes, threshold: int | None = None
) -> list[ConsortiumPeer]:
    """Deterministically build an n-peer consortium from one seed."""
    if threshold is None:
        threshold = default_threshold(n)
    keys = []
    for i in range(n):
        peer_seed = hmac.new(seed, b"peer" + i.to_bytes(4, "big"), hashlib.sha512).digest()[:32]
        keys.append(ms.keygen(params, peer_seed))
    roster = [pk for _, pk, _ in keys]
    return [
        ConsortiumPeer(i, sk, pk, pop, roster, threshold, params)
        for i, (sk, pk, pop) in enumerate(keys)
    ]


# --- device side -------------------------------------------------------------------


@dataclass
class DeviceSession:
    params: ms.SystemParams
    device_id: bytes
    x: ms.SecretKey
    pk_x: ms.PublicKey
    nonce: bytes
    seed: bytes
    threshold: int
    sk_full: ms.SecretKey | None = None


def device_begin(
    params: ms.SystemParams, device_id: bytes, seed: bytes, threshold: int = 1
) -> DeviceSession:
    """Start a registration session: derive the device secret and nonce."""
    if not device_id or len(device_id) > MAX_DEVICE_ID:
        raise ValueError(f"device_id must be 1..{MAX_DEVICE_ID} bytes")
    x = ms.SecretKey(_derive_scalar(seed, b"device-x", device_id))
    pk_x = ms.PublicKey(curve.g2_normalize(curve.g2_mul(params.g2, x.scalar)))
    nonce = hmac.new(seed, b"nonce" + device_id, hashlib.sha512).digest()[:NONCE_BYTES]
    return DeviceSession(params, device_id, x, pk_x, nonce, seed, threshold)


def build_request(
    session: DeviceSession, target_peers: list[ms.PublicKey]
) -> RegistrationRequest:
    """Encrypt (device_id, pk_x, nonce) to every target peer."""
    if len(target_peers) < session.threshold:
        raise InsufficientQuorumTargets(
            f"{len(target_peers)} targets, threshold {session.threshold}"
        )
    params = session.params
    plaintext = (
        ByteWriter()
        .blob(session.device_id)
        .raw(session.pk_x.to_bytes())
        .raw(session.nonce)
        .getvalue()
    )
    aad = session.device_id + session.nonce
    eph = _derive_scalar(session.seed, b"request-ecies", session.device_id + session.nonce)
    payloads = tuple(
        (pk.to_bytes(), _ecies_encrypt(params, pk.point, plaintext, eph, aad))
        for pk in target_peers
    )
    return RegistrationRequest(session.device_id, payloads, session.pk_x, session.nonce)


def peer_issue_share(
    peer: ConsortiumPeer, request: RegistrationRequest
) -> PartialSecretShare:
    """Authenticate the request, derive the deterministic partial secret."""
    my_pk = peer.pk.to_bytes()
    ct = next((c for pk_bytes, c in request.encrypted_payloads if pk_bytes == my_pk), None)
    if ct is None:
        raise AuthFailure("request does not target this peer")
    aad = request.device_id + request.nonce
    plaintext = _ecies_decrypt(peer.master_secret.scalar, ct, aad)
    r = ByteReader(plaintext)
    try:
        device_id, pk_x_bytes, nonce = r.blob(), r.raw(96), r.raw(NONCE_BYTES)
        r.expect_eof()
    except WireError as exc:
        raise AuthFailure(f"malformed request payload: {exc}") from exc
    if device_id != request.device_id or nonce != request.nonce:
        raise AuthFailure("payload does not match request envelope")
    if pk_x_bytes != request.pk_x.to_bytes():
        raise AuthFailure("payload does not match request ephemeral key")
    if nonce in peer._seen_nonces:
        raise ReplayRejected("nonce already consumed")
    peer._remember(peer._seen_nonces, nonce, True)
    peer._remember(peer._device_pkx, bytes(device_id), pk_x_bytes)

    d_i = ms.hash_to_identity_scalar(device_id, peer.master_secret, peer.params)
    pk_share = ms.PublicKey(curve.g2_normalize(curve.g2_mul(peer.params.g2, d_i)))
    share_sig = ms.sign(
        peer.master_secret, _share_message(device_id, pk_share.to_bytes()), peer.params
    )
    pk_x_point = curve.g2_from_bytes(pk_x_bytes)
    reply_eph = _derive_scalar(
        peer.master_secret.to_bytes(), b"share-ecies", device_id + nonce
    )
    share_aad = device_id + nonce + pk_share.to_bytes()
    enc_d = _ecies_encrypt(
        peer.params,
        pk_x_point,
        d_i.to_bytes(ms.SCALAR_BYTES, "big"),
        reply_eph,
        share_aad,
    )
    return PartialSecretShare(peer.peer_id, bytes(device_id), enc_d, pk_share, share_sig)


def assemble_bundle(
    shares: list[PartialSecretShare], peers: list[ConsortiumPeer], t: int
) -> PartialSecretBundle:
    """Validate shares, sum pk_PS, gather the threshold cosignature."""
    params = peers[0].params
    roster = peers[0].roster
    valid: dict[int, PartialSecretShare] = {}
    device_id = shares[0].device_id if shares else b""
    for share in shares:
        if share.peer_id >= len(roster) or share.device_id != device_id:
            continue
        msg = _share_message(share.device_id, share.pk_share.to_bytes())
        if not ms.verify(roster[share.peer_id], msg, share.share_sig, params):
            continue  # forged or corrupted share: excluded
        valid[share.peer_id] = share
    if len(valid) < t:
        raise ThresholdUnmet(len(valid))
    included = [valid[pid] for pid in sorted(valid)]
    acc = curve.G2_INF
    for share in included:
        acc = curve.g2_add(acc, share.pk_share.point)
    pk_ps = ms.PublicKey(curve.g2_normalize(acc))
    bitmap = tuple(pid in valid for pid in range(len(roster)))
    cosigs = [
        peers[share.peer_id].cosign_bundle(device_id, pk_ps.to_bytes())
        for share in included
    ]
    attestation = ms.MultiSignature(ms.aggregate_signatures(cosigs), bitmap)
    return PartialSecretBundle(device_id, bitmap, pk_ps, attestation, tuple(included))


def device_finalize(
    session: DeviceSession,
    bundle: PartialSecretBundle,
    roster: list[ms.PublicKey],
    issued_at: int = 0,
) -> DeviceCredential:
    """Decrypt and cross-check every share, combine keys, emit credential."""
    if bundle.device_id != session.device_id:
        raise AttestationInvalid("bundle issued for a different device")
    attest_msg = _attest_message(
        session.device_id, session.pk_x.to_bytes(), bundle.pk_ps.to_bytes()
    )
    try:
        ok = ms.verify_multisig(roster, bundle.attestation, attest_msg, session.params)
    except BitmapMismatch as exc:
        raise AttestationInvalid(str(exc)) from exc
    if not ok:
        raise AttestationInvalid("threshold cosignature does not verify")
    if bundle.attestation.signer_bitmap != bundle.bitmap:
        raise AttestationInvalid("attestation bitmap disagrees with bundle bitmap")

    total = 0
    acc = curve.G2_INF
    for share in bundle.shares:
        share_aad = session.device_id + session.nonce + share.pk_share.to_bytes()
        try:
            d_bytes = _ecies_decrypt(session.x.scalar, share.d_i, share_aad)
        except AuthFailure as exc:
            raise ShareMismatch(f"peer {share.peer_id}: cannot decrypt share") from exc
        d_i = int.from_bytes(d_bytes, "big")
        expected = curve.g2_normalize(curve.g2_mul(session.params.g2, d_i))
        if not curve.g2_eq(expected, share.pk_share.point):
            raise ShareMismatch(f"peer {share.peer_id}: scalar does not match pk_share")
        total = (total + d_i) % ms.GROUP_ORDER
        acc = curve.g2_add(acc, share.pk_share.point)
    if not curve.g2_eq(acc, bundle.pk_ps.point):
        raise ShareMismatch("sum of pk_shares does not match pk_PS")

    sk_full, pk_full = ms.combine_keys(session.x, total, session.params)
    session.sk_full = sk_full
    return DeviceCredential(session.device_id, pk_full, bundle, issued_at)


def verify_credential(
    credential: DeviceCredential,
    roster: list[ms.PublicKey],
    t: int,
    params: ms.SystemParams = ms.DEFAULT_PARAMS,
) -> bool:
    """Boolean check: threshold met, attestation valid, fields consistent."""
    bundle = credential.bundle
    if credential.device_id != bundle.device_id:
        return False
    if len(bundle.bitmap) != len(roster) or sum(bundle.bitmap) < t:
        return False
    if bundle.attestation.signer_bitmap != bundle.bitmap:
        return False
    if credential.pk_full.is_identity():
        return False
    # The device's ephemeral key is pk_full - pk_PS; the attestation must
    # cover it, which is what makes pk_full tamper-evident.
    pk_x_point = curve.g2_normalize(
        curve.g2_add(credential.pk_full.point, curve.g2_neg(bundle.pk_ps.point))
    )
    msg = _attest_message(
        credential.device_id,
        curve.g2_to_bytes(pk_x_point),
        bundle.pk_ps.to_bytes(),
    )
    try:
        return ms.verify_multisig(roster, bundle.attestation, msg, params)
    except BitmapMismatch:
        return False


@dataclass(frozen=True)
class RegistrationResult:
    credential: DeviceCredential
    sk_full: ms.SecretKey
    transcript: tuple[str, ...]


def register_device(
    params: ms.SystemParams,
    peers: list[ConsortiumPeer],
    device_id: bytes,
    seed: bytes,
    issued_at: int = 0,
    targets: list[int] | None = None,
    silent: tuple[int, ...] = (),
) -> RegistrationResult:
    """Run the full registration flow; returns credential, key, transcript.

    Peers listed in `silent` are targeted but never answer (offline),
    so the flow fails with ThresholdUnmet when too few shares remain.
    """
    t = peers[0].threshold
    session = device_begin(params, device_id, seed, threshold=t)
    target_ids = list(range(len(peers))) if targets is None else list(targets)
    request = build_request(session, [peers[i].pk for i in target_ids])
    lines = [f"request {request.to_bytes().hex()}"]
    shares = []
    unreachable = set(silent)
    for i in target_ids:
        if i in unreachable:
            continue
        share = peer_issue_share(peers[i], request)
        shares.append(share)
        lines.append(f"share {share.to_bytes().hex()}")
    bundle = assemble_bundle(shares, peers, t)
    lines.append(f"bundle {bundle.to_bytes().hex()}")
    credential = device_finalize(session, bundle, peers[0].roster, issued_at)
    lines.append(f"credential {credential.to_bytes().hex()}")
    assert session.sk_full is not None
    return RegistrationResult(credential, session.sk_full, tuple(lines))
