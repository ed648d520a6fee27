"""Consortium ledger state machine.

Transactions flow through propose → endorse → collect → (ordering) →
validate → commit:

- propose: a registered device signs an action over one state key.
- endorse: a consortium peer authenticates the device (against the
  registration record already on the ledger), checks the ACL, simulates
  the action against its world-state snapshot, and signs a YES/NO
  verdict over the digest of the simulated read/write sets.
- collect: with >= t_e YES verdicts agreeing on the digest, the
  read/write sets are fixed into the transaction and the endorsement
  signatures collapse into one multi-signature.
- validate/commit: blocks are hash-linked (merkle root over tx ids);
  multi-version concurrency control marks stale reads invalid; only
  valid transactions touch the world state, bumping each written key's
  version by exactly one.

Reads (query) never involve ordering — they are served from the
world-state snapshot directly, which is why read throughput dominates
write throughput in the benchmarks.

Device registration is itself recorded on the ledger under the reserved
key prefix "~registry/": a device may write only its own record, and
that write is authenticated by the threshold-cosigned credential
embedded in the value rather than by a prior record (the bootstrap
path).
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace
from functools import lru_cache

from . import mscrypto as ms
from .errors import (
    AclDenied,
    BrokenChain,
    DigestDivergence,
    InvalidAction,
    KeyNotFound,
    PolicyUnmet,
    QuorumInvalid,
    WireError,
)
from .registry import ConsortiumPeer, DeviceCredential, verify_credential
from .wire import ByteReader, ByteWriter

REGISTRY_PREFIX = "~registry/"
LEDGER_MAGIC = b"CPSL"
LEDGER_VERSION = 1
ZERO_HASH = bytes(32)

_TX_TAG = b"ledger-tx"
_ENDORSE_TAG = b"ledger-endorse"
_COMMIT_TAG = b"ledger-commit"


class Action(enum.Enum):
    UPDATE = 1
    STORE = 2
    ACCESS = 3

    @classmethod
    def from_name(cls, name: str) -> "Action":
        try:
            return cls[name.upper()]
        except KeyError:
            raise InvalidAction(f"unknown action {name!r}") from None


def registration_key(device_id: bytes) -> str:
    return REGISTRY_PREFIX + device_id.hex()


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _write_rw_sets(w: ByteWriter, read_set, write_set) -> None:
    w.u32(len(read_set))
    for key, version in read_set:
        w.blob(key.encode())
        w.u64(version)
    w.u32(len(write_set))
    for key, value in write_set:
        w.blob(key.encode())
        w.blob(value)


def _decode_str(data: bytes) -> str:
    try:
        return data.decode()
    except UnicodeDecodeError as exc:
        raise WireError(f"invalid utf-8 in key: {exc}") from exc


def _read_flag(r: ByteReader) -> bool:
    """Presence flags must be exactly 0 or 1 so that every encoding is
    canonical — a flipped flag byte can never parse back to the same value."""
    flag = r.u8()
    if flag > 1:
        raise WireError(f"bad presence flag {flag}")
    return flag == 1


def _read_rw_sets(r: ByteReader):
    read_set = tuple((_decode_str(r.blob()), r.u64()) for _ in range(r.u32()))
    write_set = tuple((_decode_str(r.blob()), r.blob()) for _ in range(r.u32()))
    return read_set, write_set


def rw_digest(read_set, write_set) -> bytes:
    w = ByteWriter()
    _write_rw_sets(w, read_set, write_set)
    return sha256(w.getvalue())


@dataclass(frozen=True)
class Endorsement:
    peer_id: int
    verdict: bool  # True = YES
    reason: str  # reason code on NO, empty on YES
    response_digest: bytes
    read_set: tuple[tuple[str, int], ...]
    write_set: tuple[tuple[str, bytes], ...]
    sig: ms.Signature

    def message(self, tx_id: bytes) -> bytes:
        return endorsement_message(tx_id, self.verdict, self.response_digest)

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.u32(self.peer_id)
        w.u8(1 if self.verdict else 0)
        w.blob(self.reason.encode())
        w.raw(self.response_digest)
        _write_rw_sets(w, self.read_set, self.write_set)
        w.raw(self.sig.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Endorsement":
        r = ByteReader(data)
        peer_id = r.u32()
        verdict = r.u8() == 1
        reason = _decode_str(r.blob())
        digest = r.raw(32)
        read_set, write_set = _read_rw_sets(r)
        sig = ms.Signature.from_bytes(r.raw(48))
        r.expect_eof()
        return cls(peer_id, verdict, reason, digest, read_set, write_set, sig)


def endorsement_message(tx_id: bytes, verdict: bool, response_digest: bytes) -> bytes:
    return _ENDORSE_TAG + tx_id + bytes([1 if verdict else 0]) + response_digest


@dataclass(frozen=True)
class Transaction:
    tx_id: bytes
    device_id: bytes
    timestamp: int
    action: Action
    key: str
    value: bytes
    read_set: tuple[tuple[str, int], ...]
    write_set: tuple[tuple[str, bytes], ...]
    device_sig: ms.Signature
    endorsements: tuple[Endorsement, ...]
    endorsement_agg: ms.MultiSignature | None
    validity: bool | None

    def body(self) -> bytes:
        return tx_body(self.device_id, self.timestamp, self.action, self.key, self.value)

    def _serialize(self, validity_byte: int) -> bytes:
        w = ByteWriter()
        w.raw(self.tx_id)
        w.blob(self.device_id)
        w.u64(self.timestamp)
        w.u8(self.action.value)
        w.blob(self.key.encode())
        w.blob(self.value)
        _write_rw_sets(w, self.read_set, self.write_set)
        w.raw(self.device_sig.to_bytes())
        w.u32(len(self.endorsements))
        for e in self.endorsements:
            w.blob(e.to_bytes())
        if self.endorsement_agg is None:
            w.u8(0)
        else:
            w.u8(1)
            w.blob(self.endorsement_agg.to_bytes())
        w.u8(validity_byte)
        return w.getvalue()

    def to_bytes(self) -> bytes:
        return self._serialize(0 if self.validity is None else (1 if self.validity else 2))

    def envelope_bytes(self) -> bytes:
        """Serialization with the validity stamp masked — what the merkle
        leaf covers, so the hash is stable across the commit stamping."""
        return self._serialize(0)

    def leaf_hash(self) -> bytes:
        return sha256(b"txleaf" + self.envelope_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transaction":
        r = ByteReader(data)
        tx_id = r.raw(32)
        device_id = r.blob()
        timestamp = r.u64()
        try:
            action = Action(r.u8())
        except ValueError as exc:
            raise WireError(str(exc)) from exc
        key = _decode_str(r.blob())
        value = r.blob()
        read_set, write_set = _read_rw_sets(r)
        device_sig = ms.Signature.from_bytes(r.raw(48))
        endorsements = tuple(Endorsement.from_bytes(r.blob()) for _ in range(r.u32()))
        agg = ms.MultiSignature.from_bytes(r.blob()) if _read_flag(r) else None
        vbyte = r.u8()
        if vbyte > 2:
            raise WireError(f"bad validity byte {vbyte}")
        validity = None if vbyte == 0 else vbyte == 1
        r.expect_eof()
        return cls(
            tx_id, device_id, timestamp, action, key, value,
            read_set, write_set, device_sig, endorsements, agg, validity,
        )


def tx_body(device_id: bytes, timestamp: int, action: Action, key: str, value: bytes) -> bytes:
    w = ByteWriter()
    w.blob(device_id)
    w.u64(timestamp)
    w.u8(action.value)
    w.blob(key.encode())
    w.blob(value)
    return w.getvalue()


@dataclass(frozen=True)
class EndorsementPolicy:
    """Who may endorse what, and which devices may do which actions."""

    roster: tuple[ms.PublicKey, ...]
    action_subsets: dict[Action, tuple[int, ...]]
    t_e: int
    acl: dict[bytes, frozenset[Action]]
    reg_threshold: int

    def __post_init__(self):
        for action, subset in self.action_subsets.items():
            if self.t_e > len(subset):
                raise ValueError(
                    f"t_e={self.t_e} exceeds endorser subset for {action.name}"
                )
            if any(not 0 <= i < len(self.roster) for i in subset):
                raise ValueError(f"endorser index out of roster range for {action.name}")

    def permits(self, device_id: bytes, action: Action) -> bool:
        return action in self.acl.get(bytes(device_id), frozenset())


def default_policy(
    roster, acl: dict[bytes, frozenset[Action]], t_e: int | None = None,
    reg_threshold: int | None = None,
) -> EndorsementPolicy:
    """Every peer endorses every action; t_e defaults to a two-thirds quorum."""
    n = len(roster)
    everyone = tuple(range(n))
    if t_e is None:
        t_e = -(-2 * n // 3)
    if reg_threshold is None:
        reg_threshold = -(-2 * n // 3)
    return EndorsementPolicy(
        tuple(roster),
        {a: everyone for a in Action},
        t_e,
        dict(acl),
        reg_threshold,
    )


# --- world state -------------------------------------------------------------------


class WorldState:
    """key → (value, version). Versions start at 1 and grow by exactly 1
    per committed write to the key."""

    def __init__(self):
        self._entries: dict[str, tuple[bytes, int]] = {}

    def get(self, key: str) -> tuple[bytes, int] | None:
        return self._entries.get(key)

    def version(self, key: str) -> int:
        entry = self._entries.get(key)
        return entry[1] if entry else 0

    def apply_write(self, key: str, value: bytes) -> None:
        self._entries[key] = (value, self.version(key) + 1)

    def items(self):
        return self._entries.items()

    def __len__(self) -> int:
        return len(self._entries)

    def snapshot(self) -> dict[str, tuple[bytes, int]]:
        return dict(self._entries)


@lru_cache(maxsize=4096)
def _pk_full_from_record(record: bytes) -> ms.PublicKey:
    return DeviceCredential.from_bytes(record).pk_full


# --- blocks ------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    txs: tuple[Transaction, ...]
    flags: tuple[bool, ...] | None
    block_hash: bytes
    proposer_id: int
    commit_sigs: ms.MultiSignature | None

    def to_bytes(self) -> bytes:
        w = ByteWriter()
        w.u64(self.height)
        w.raw(self.prev_hash)
        w.u32(len(self.txs))
        for tx in self.txs:
            w.blob(tx.to_bytes())
        if self.flags is None:
            w.u8(0)
        else:
            w.u8(1)
            w.raw(bytes(1 if f else 0 for f in self.flags))
        w.raw(self.block_hash)
        w.u32(self.proposer_id)
        if self.commit_sigs is None:
            w.u8(0)
        else:
            w.u8(1)
            w.blob(self.commit_sigs.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        r = ByteReader(data)
        height = r.u64()
        prev_hash = r.raw(32)
        txs = tuple(Transaction.from_bytes(r.blob()) for _ in range(r.u32()))
        flags = None
        if _read_flag(r):
            raw_flags = r.raw(len(txs))
            if any(b > 1 for b in raw_flags):
                raise WireError("bad validity flag in block")
            flags = tuple(b == 1 for b in raw_flags)
        block_hash = r.raw(32)
        proposer_id = r.u32()
        commit_sigs = ms.MultiSignature.from_bytes(r.blob()) if _read_flag(r) else None
        r.expect_eof()
        return cls(height, prev_hash, txs, flags, block_hash, proposer_id, commit_sigs)


def merkle_root(leaves: list[bytes]) -> bytes:
    """Binary merkle tree, duplicating the last node on odd levels; the
    empty block's root is all-zero. Leaves are envelope digests so that
    every byte of a committed transaction is covered, not just its id."""
    if not leaves:
        return ZERO_HASH
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def block_hash_of(height: int, proposer_id: int, prev_hash: bytes, leaves: list[bytes]) -> bytes:
    """Hash every field that defines the block's identity, including the
    proposer, so no serialized byte escapes the chain's integrity check."""
    return sha256(
        height.to_bytes(8, "big")
        + proposer_id.to_bytes(4, "big")
        + prev_hash
        + merkle_root(leaves)
    )


def commit_message(block_hash: bytes) -> bytes:
    return _COMMIT_TAG + block_hash


def make_block(
    height: int,
    prev_hash: bytes,
    txs: list[Transaction],
    proposer_id: int,
    commit_sigs: ms.MultiSignature | None = None,
) -> Block:
    bh = block_hash_of(height, proposer_id, prev_hash, [tx.leaf_hash() for tx in txs])
    return Block(height, prev_hash, tuple(txs), None, bh, proposer_id, commit_sigs)


def genesis_block() -> Block:
    bh = block_hash_of(0, 0, ZERO_HASH, [])
    return Block(0, ZERO_HASH, (), (), bh, 0, None)


# --- operations --------------------------------------------------------------------


def propose(
    credential: DeviceCredential,
    sk_full: ms.SecretKey,
    action: Action,
    key: str,
    value: bytes,
    clock: int,
    params: ms.SystemParams = ms.DEFAULT_PARAMS,
) -> Transaction:
    """Build and sign an unendorsed transaction."""
    if not isinstance(action, Action):
        raise InvalidAction(f"unknown action {action!r}")
    if action is Action.ACCESS and value:
        raise InvalidAction("Access carries no value")
    body = tx_body(credential.device_id, clock, action, key, value)
    tx_id = sha256(body)
    device_sig = ms.sign(sk_full, _TX_TAG + body, params)
    return Transaction(
        tx_id, credential.device_id, clock, action, key, value,
        (), (), device_sig, (), None, None,
    )


def _no(peer: ConsortiumPeer, tx: Transaction, reason: str) -> Endorsement:
    digest = rw_digest((), ())
    sig = ms.sign(peer.master_secret, endorsement_message(tx.tx_id, False, digest), peer.params)
    return Endorsement(peer.peer_id, False, reason, digest, (), (), sig)


def _simulate(tx: Transaction, world_state: WorldState):
    """Deterministic CRUD interpreter over a snapshot. Returns
    (read_set, write_set) or a NO reason code."""
    version = world_state.version(tx.key)
    if tx.action is Action.ACCESS:
        if world_state.get(tx.key) is None:
            return "KeyNotFound"
        return ((tx.key, version),), ()
    if tx.action is Action.STORE:
        value = tx.value
        if len(value) != 64 or not all(c in b"0123456789abcdef" for c in value):
            return "BadAddress"
    return ((tx.key, version),), ((tx.key, tx.value),)


def endorse(
    peer: ConsortiumPeer,
    tx: Transaction,
    world_state: WorldState,
    policy: EndorsementPolicy,
) -> Endorsement:
    """Authenticate, check ACL, simulate; YES/NO verdict, never an exception."""
    if sha256(tx.body()) != tx.tx_id:
        return _no(peer, tx, "BadTxId")

    is_registration = tx.key == registration_key(tx.device_id)
    if is_registration:
        # Bootstrap: authenticate against the credential being recorded.
        if tx.action is not Action.UPDATE:
            return _no(peer, tx, "AclDenied")
        try:
            credential = DeviceCredential.from_bytes(tx.value)
        except WireError:
            return _no(peer, tx, "InvalidCredential")
        if credential.device_id != tx.device_id:
            return _no(peer, tx, "InvalidCredential")
        if not verify_credential(
            credential, list(policy.roster), policy.reg_threshold, peer.params
        ):
            return _no(peer, tx, "InvalidCredential")
        pk_full = credential.pk_full
    elif tx.key.startswith(REGISTRY_PREFIX):
        return _no(peer, tx, "AclDenied")  # no device may write another's record
    else:
        record = world_state.get(registration_key(tx.device_id))
        if record is None:
            return _no(peer, tx, "UnknownDevice")
        pk_full = _pk_full_from_record(record[0])

    if not ms.verify(pk_full, _TX_TAG + tx.body(), tx.device_sig, peer.params):
        return _no(peer, tx, "BadSignature")
    if not is_registration and not policy.permits(tx.device_id, tx.action):
        return _no(peer, tx, "AclDenied")

    result = _simulate(tx, world_state)
    if isinstance(result, str):
        return _no(peer, tx, result)
    read_set, write_set = result
    digest = rw_digest(read_set, write_set)
    sig = ms.sign(peer.master_secret, endorsement_message(tx.tx_id, True, digest), peer.params)
    return Endorsement(peer.peer_id, True, "", digest, read_set, write_set, sig)


def collect(
    tx: Transaction,
    endorsements: list[Endorsement],
    policy: EndorsementPolicy,
    params: ms.SystemParams = ms.DEFAULT_PARAMS,
) -> Transaction:
    """Form the transaction envelope from sufficient agreeing YES verdicts."""
    subset = set(policy.action_subsets.get(tx.action, ()))
    yes: dict[int, Endorsement] = {}
    for e in endorsements:
        if e.peer_id not in subset or e.peer_id in yes:
            continue
        if not ms.verify(policy.roster[e.peer_id], e.message(tx.tx_id), e.sig, params):
            continue
        if e.verdict:
            yes[e.peer_id] = e
    if len(yes) < policy.t_e:
        raise PolicyUnmet(len(yes))
    chosen = [yes[pid] for pid in sorted(yes)]
    digests = {e.response_digest for e in chosen}
    if len(digests) > 1:
        raise DigestDivergence(f"{len(digests)} distinct response digests")
    lead = chosen[0]
    if rw_digest(lead.read_set, lead.write_set) != lead.response_digest:
        raise DigestDivergence("response digest does not match carried sets")
    bitmap = tuple(pid in yes for pid in range(len(policy.roster)))
    agg = ms.MultiSignature(ms.aggregate_signatures([e.sig for e in chosen]), bitmap)
    return replace(
        tx,
        read_set=lead.read_set,
        write_set=lead.write_set,
        endorsements=tuple(chosen),
        endorsement_agg=agg,
    )


def query(
    world_state: WorldState,
    credential: DeviceCredential,
    key: str,
    policy: EndorsementPolicy,
) -> tuple[bytes, int]:
    """Read path: ACL-gated snapshot lookup, no ordering involvement."""
    if not policy.permits(credential.device_id, Action.ACCESS):
        raise AclDenied(f"device {credential.device_id.hex()} may not Access")
    entry = world_state.get(key)
    if entry is None:
        raise KeyNotFound(key)
    return entry


def validate_block(
    block: Block, world_state: WorldState, prev_hash: bytes
) -> tuple[bool, ...]:
    """MVCC check: a tx is valid iff every read version matches the state
    after all earlier valid txs in this block applied."""
    if block.prev_hash != prev_hash:
        raise BrokenChain(
            f"block {block.height} prev_hash does not extend the current tip"
        )
    overlay: dict[str, int] = {}
    flags = []
    for tx in block.txs:
        ok = bool(tx.read_set) or bool(tx.write_set)
        for key, version in tx.read_set:
            current = overlay.get(key, world_state.version(key))
            if current != version:
                ok = False
                break
        if ok:
            for key, _ in tx.write_set:
                overlay[key] = overlay.get(key, world_state.version(key)) + 1
        flags.append(ok)
    return tuple(flags)


class Ledger:
    """Hash-linked block store plus the world state it defines. Owned by
    a single logical committer; endorsement runs against snapshots."""

    def __init__(
        self,
        osn_roster: list[ms.PublicKey] | None = None,
        osn_quorum: int = 0,
        params: ms.SystemParams = ms.DEFAULT_PARAMS,
    ):
        self.params = params
        self.osn_roster = list(osn_roster or [])
        self.osn_quorum = osn_quorum
        self.blocks: list[Block] = [genesis_block()]
        self.world_state = WorldState()

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    def export_bytes(self) -> bytes:
        w = ByteWriter()
        w.raw(LEDGER_MAGIC)
        w.u32(LEDGER_VERSION)
        w.u32(len(self.blocks))
        for block in self.blocks:
            w.blob(block.to_bytes())
        return w.getvalue()


def commit_block(ledger: Ledger, block: Block) -> Block:
    """Validate, verify the ordering quorum, apply valid txs, append."""
    tip = ledger.tip
    if block.height != tip.height + 1:
        raise BrokenChain(f"expected height {tip.height + 1}, got {block.height}")
    if block.prev_hash != tip.block_hash:
        raise BrokenChain(f"block {block.height} does not extend the current tip")
    expected_hash = block_hash_of(
        block.height, block.proposer_id, block.prev_hash,
        [tx.leaf_hash() for tx in block.txs],
    )
    if block.block_hash != expected_hash:
        raise BrokenChain("block hash does not recompute")
    if ledger.osn_quorum > 0:
        sigs = block.commit_sigs
        if sigs is None or sigs.popcount() < ledger.osn_quorum:
            raise QuorumInvalid("insufficient commit signatures")
        if not ms.verify_multisig(
            ledger.osn_roster, sigs, commit_message(block.block_hash), ledger.params
        ):
            raise QuorumInvalid("commit signature does not verify")
    flags = validate_block(block, ledger.world_state, tip.block_hash)
    for tx, ok in zip(block.txs, flags):
        if not ok:
            continue
        for key, value in tx.write_set:
            ledger.world_state.apply_write(key, value)
    stamped = replace(
        block,
        flags=flags,
        txs=tuple(replace(tx, validity=ok) for tx, ok in zip(block.txs, flags)),
    )
    ledger.blocks.append(stamped)
    return stamped


def verify_chain(ledger_or_blocks) -> bool:
    """True iff every tx id, merkle root, block hash, link, and validity
    stamp recomputes (validity is replayed from genesis, so flag tampering
    is as detectable as payload tampering).

    Cheap hash and link checks run over the whole chain before the
    signature-heavy replay pass, so corrupt files are rejected without
    paying for a single signature verification."""
    blocks = (
        ledger_or_blocks.blocks
        if isinstance(ledger_or_blocks, Ledger)
        else list(ledger_or_blocks)
    )
    if not blocks:
        return False
    prev = None
    for i, block in enumerate(blocks):
        if block.height != i:
            return False
        if i == 0 and block.prev_hash != ZERO_HASH:
            return False
        if i > 0 and block.prev_hash != prev.block_hash:
            return False
        for tx in block.txs:
            if sha256(tx.body()) != tx.tx_id:
                return False
        if block.block_hash != block_hash_of(
            block.height, block.proposer_id, block.prev_hash,
            [tx.leaf_hash() for tx in block.txs],
        ):
            return False
        if block.flags is None or len(block.flags) != len(block.txs):
            return False
        if tuple(tx.validity for tx in block.txs) != block.flags:
            return False
        prev = block
    replay = WorldState()
    prev = None
    for i, block in enumerate(blocks):
        if i > 0:
            expected = validate_block(block, replay, prev.block_hash)
            if expected != block.flags:
                return False
            for tx, ok in zip(block.txs, expected):
                if not ok:
                    continue
                for key, value in tx.write_set:
                    replay.apply_write(key, value)
        prev = block
    return True


def load_ledger_bytes(data: bytes) -> list[Block]:
    """Parse an exported ledger file into blocks (hashes not yet checked)."""
    r = ByteReader(data)
    if r.raw(4) != LEDGER_MAGIC:
        raise WireError("not a ledger file")
    version = r.u32()
    if version != LEDGER_VERSION:
        raise WireError(f"unsupported ledger file version {version}")
    blocks = [Block.from_bytes(r.blob()) for _ in range(r.u32())]
    r.expect_eof()
    return blocks
