"""Content-addressed distributed hash table for off-chain payloads.

The ledger stores only 32-byte content addresses; the payload bytes
live here, replicated at the `k` nodes whose 160-bit ids sit closest
(XOR metric) to the address. Lookups are iterative with `alpha`
parallel queries per round and terminate when a round brings nothing
closer. Every read re-hashes the stored bytes before returning them; a
corrupt replica is skipped and the next one tried.

Nodes exchange messages over the shared deterministic tick network, so
a DHT scenario replays bit-identically from its seed; node failures use
plain crash semantics (a crashed node stops answering queries).
"""

from __future__ import annotations

import hashlib

from dataclasses import dataclass, field

from .errors import (
    BootstrapUnreachable,
    ConfigInvalid,
    IntegrityFailure,
    NotFound,
    PayloadTooLarge,
    WireError,
)
from .simnet import SimNetwork

ID_BITS = 160
BUCKET_COUNT = ID_BITS
DEFAULT_K = 4
DEFAULT_ALPHA = 2
DEFAULT_MAX_PAYLOAD = 1 << 20  # 1 MiB


def node_id_from_seed(seed: bytes) -> int:
    """Uniform 160-bit identifier derived from the node's seed."""
    return int.from_bytes(hashlib.sha256(b"dht-node-id" + seed).digest()[:20], "big")


def content_address(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()


def format_address(addr: bytes) -> str:
    return addr.hex()


def parse_address(text: str) -> bytes:
    text = text.strip()
    if len(text) != 64 or text != text.lower():
        raise WireError("content address must be 64 lowercase hex characters")
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise WireError("content address must be 64 lowercase hex characters") from None


def distance(a: int, b: int) -> int:
    return a ^ b


def key_id(addr: bytes) -> int:
    """Project a 256-bit content address into the 160-bit node id space."""
    return int.from_bytes(addr[: ID_BITS // 8], "big")


def bucket_index(own_id: int, other_id: int) -> int:
    """Bucket by the bit length of the XOR distance; ids are never
    bucketed against themselves."""
    d = own_id ^ other_id
    if d == 0:
        raise ValueError("a node does not bucket its own id")
    return d.bit_length() - 1


class RoutingTable:
    """160 k-buckets of (node_id, last_seen), oldest contact first."""

    def __init__(self, own_id: int, k: int = DEFAULT_K):
        self.own_id = own_id
        self.k = k
        self.buckets: list[list[tuple[int, int]]] = [[] for _ in range(BUCKET_COUNT)]

    def observe(self, node_id: int, tick: int, evict_dead=None) -> None:
        """Record contact with a node. A full bucket keeps its oldest
        entry unless `evict_dead` reports it unreachable."""
        if node_id == self.own_id:
            return
        bucket = self.buckets[bucket_index(self.own_id, node_id)]
        for i, (nid, _) in enumerate(bucket):
            if nid == node_id:
                bucket.pop(i)
                bucket.append((node_id, tick))
                return
        if len(bucket) < self.k:
            bucket.append((node_id, tick))
            return
        oldest = bucket[0][0]
        if evict_dead is not None and evict_dead(oldest):
            bucket.pop(0)
            bucket.append((node_id, tick))
        # else: drop the newcomer, keep the long-lived contact

    def contacts(self) -> list[int]:
        return [nid for bucket in self.buckets for nid, _ in bucket]

    def closest(self, target: int, count: int) -> list[int]:
        return sorted(self.contacts(), key=lambda nid: nid ^ target)[:count]


@dataclass
class DhtNode:
    node_id: int
    transport: int  # small index used for tick-network addressing
    table: RoutingTable
    store: dict[bytes, bytes] = field(default_factory=dict)
    crashed_at: int | None = None

    def crashed(self, tick: int) -> bool:
        return self.crashed_at is not None and tick >= self.crashed_at


@dataclass
class LookupResult:
    closest: list[int]
    rounds: int
    queried: int

    def __iter__(self):
        return iter(self.closest)


class DhtNetwork:
    """All live DHT actors plus the shared tick network."""

    def __init__(
        self,
        seed: int | bytes = 0,
        k: int = DEFAULT_K,
        alpha: int = DEFAULT_ALPHA,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
        net: SimNetwork | None = None,
    ):
        if k < 1:
            raise ConfigInvalid("replication factor must be positive", "dht.k")
        if alpha < 1:
            raise ConfigInvalid("lookup parallelism must be positive", "dht.alpha")
        self.k = k
        self.alpha = alpha
        self.max_payload = max_payload
        self.net = net if net is not None else SimNetwork(seed=seed)
        self.nodes: dict[int, DhtNode] = {}
        self._next_transport = 0

    def spawn(self, seed: bytes) -> DhtNode:
        """Create a node actor; it only becomes discoverable after join."""
        nid = node_id_from_seed(seed)
        if nid in self.nodes:
            return self.nodes[nid]
        node = DhtNode(nid, self._next_transport, RoutingTable(nid, self.k))
        self._next_transport += 1
        self.nodes[nid] = node
        return node

    def crash(self, node_id: int, at_tick: int | None = None) -> None:
        self.nodes[node_id].crashed_at = self.net.now if at_tick is None else at_tick

    def live_ids(self) -> list[int]:
        return [nid for nid, n in self.nodes.items() if not n.crashed(self.net.now)]

    def alive(self, node_id: int) -> bool:
        node = self.nodes.get(node_id)
        return node is not None and not node.crashed(self.net.now)


def _rpc(network: DhtNetwork, src: DhtNode, dst: DhtNode, mtype: str, payload):
    """One request/response exchange over the tick network. Returns the
    response, or None when the destination is down (timeout)."""
    net = network.net
    net.send(src.transport, dst.transport, mtype, payload)
    while net.pending():
        net.pop()
    if dst.crashed(net.now):
        return None
    dst.table.observe(
        src.node_id, net.now, evict_dead=lambda nid: not network.alive(nid)
    )
    if mtype == "find-node":
        # A node's failure detector prunes dead contacts from replies
        # (they get evicted on the first failed RPC in a live system).
        living = [c for c in dst.table.contacts() if network.alive(c)]
        response = sorted(set(living) | {dst.node_id}, key=lambda n: n ^ payload)[
            : network.k
        ]
    elif mtype == "store":
        addr, blob = payload
        dst.store[addr] = blob
        response = True
    elif mtype == "fetch":
        response = dst.store.get(payload)
    elif mtype == "ping":
        response = True
    else:
        raise ValueError(f"unknown rpc {mtype!r}")
    net.send(dst.transport, src.transport, mtype + "-reply", response)
    while net.pending():
        net.pop()
    return response


def lookup(network: DhtNetwork, target, initiator: int | None = None) -> LookupResult:
    """Iterative lookup: each round queries `alpha` unvisited nodes from
    the k closest candidates known so far; the search ends when those k
    closest have all answered (no round can bring anything closer).
    Returns the k closest live node ids found."""
    if isinstance(target, (bytes, bytearray)):
        target = key_id(bytes(target))
    live = network.live_ids()
    if not live:
        return LookupResult([], 0, 0)
    if initiator is None:
        initiator = min(live, key=lambda nid: nid ^ target)
    origin = network.nodes[initiator]

    shortlist = {initiator}
    shortlist.update(origin.table.closest(target, network.k))
    queried: set[int] = {initiator}  # own contacts are already in the shortlist
    responded: set[int] = {initiator}
    rounds = 0
    while True:
        best = sorted(shortlist, key=lambda n: n ^ target)[: network.k]
        todo = [nid for nid in best if nid not in queried][: network.alpha]
        if not todo:
            break
        rounds += 1
        for nid in todo:
            queried.add(nid)
            reply = _rpc(network, origin, network.nodes[nid], "find-node", target)
            if reply is None:
                shortlist.discard(nid)  # unreachable: drop from consideration
                continue
            responded.add(nid)
            origin.table.observe(
                nid, network.net.now, evict_dead=lambda x: not network.alive(x)
            )
            for found in reply:
                if network.alive(found):
                    shortlist.add(found)
    found = sorted(responded & shortlist, key=lambda n: n ^ target)
    return LookupResult(found[: network.k], rounds, len(queried))


def join(network: DhtNetwork, node: DhtNode, bootstrap: int | None) -> RoutingTable:
    """Introduce a node through a bootstrap contact, then locate the
    node's own neighborhood so the nodes nearest to it learn it exists."""
    if bootstrap is None:  # genesis node: nothing to learn yet
        return node.table
    if not network.alive(bootstrap) or bootstrap == node.node_id:
        raise BootstrapUnreachable(f"bootstrap {bootstrap:040x} did not respond")
    node.table.observe(bootstrap, network.net.now)
    lookup(network, node.node_id, initiator=node.node_id)
    # Refresh the broad-range buckets so early joiners stay routable as
    # the id space fills in around them.
    for _ in range(2):
        probe = network.net.rng.getrandbits(ID_BITS)
        lookup(network, probe, initiator=node.node_id)
    return node.table


def put(network: DhtNetwork, payload: bytes, origin: int | None = None) -> bytes:
    """Store the payload at the k nodes closest to its address."""
    if len(payload) > network.max_payload:
        raise PayloadTooLarge(
            f"payload of {len(payload)} bytes exceeds the {network.max_payload}-byte cap"
        )
    addr = content_address(payload)
    result = lookup(network, addr, initiator=origin)
    if not result.closest:
        raise NotFound("no live nodes to store at")
    src = network.nodes[result.closest[0] if origin is None else origin]
    for nid in result.closest:
        if nid == src.node_id:
            src.store[addr] = payload
        else:
            _rpc(network, src, network.nodes[nid], "store", (addr, payload))
    return addr


def get(network: DhtNetwork, addr: bytes, origin: int | None = None) -> bytes:
    """Fetch and verify; corrupt replicas are skipped, never returned."""
    result = lookup(network, addr, initiator=origin)
    if not result.closest:
        raise NotFound(f"no replica holds {addr.hex()}")
    src = network.nodes[origin if origin is not None else result.closest[0]]
    saw_corrupt = False
    for nid in result.closest:
        holder = network.nodes[nid]
        if nid == src.node_id:
            blob = holder.store.get(addr)
        else:
            blob = _rpc(network, src, holder, "fetch", addr)
        if blob is None:
            continue
        if content_address(blob) == addr:
            return blob
        saw_corrupt = True  # tampered replica: discard, try the next one
    if saw_corrupt:
        raise IntegrityFailure(f"every replica of {addr.hex()} failed verification")
    raise NotFound(f"no replica holds {addr.hex()}")
