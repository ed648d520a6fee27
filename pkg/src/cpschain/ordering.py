"""Ordering service nodes and consensus engines over the tick simulator.

Two interchangeable agreement cores run on the same deterministic
network:

- PBFT: pre-prepare → prepare (quorum 2f+1) → commit (quorum 2f+1),
  with round-robin view change on leader timeout (doubling timeout).
  A node that observes a prepare quorum locks that digest and votes only
  for it in later views, which is what keeps decisions irreversible
  across view changes. Commit votes carry real BLS partial signatures
  over the block hash, so any commit quorum doubles as the block's
  quorum certificate. View-change messages assert the sender's lock;
  under the implemented fault kinds (silent nodes, proposal-equivocating
  or payload-corrupting leaders — faulty nodes still follow the voting
  rules for whatever proposal they received) this preserves agreement
  without full new-view certificates.
- CFT: lowest-alive-index leader replicates the block and commits on
  majority acks; followers detect leader silence by timeout and rotate
  to the next index deterministically.

Batching: an ordering node cuts a block when its queue reaches
batch_size or the oldest queued envelope exceeds batch_timeout ticks.
Committed blocks spread to non-ordering replicas by gossip; anti-entropy
repairs any replica that a partition left behind.
"""

from __future__ import annotations

import dataclasses
import hashlib
import hmac as hmac_mod

from dataclasses import dataclass

from . import ledger as led
from . import mscrypto as ms
from .errors import (
    ConfigInvalid,
    DivergentHistory,
    NoQuorum,
    QueueFull,
)
from .simnet import SimNetwork

PBFT = "pbft"
CFT = "cft"
BYZANTINE_KINDS = ("equivocate", "withhold", "corrupt-payload")
FAULT_KINDS = ("crash",) + BYZANTINE_KINDS


@dataclass(frozen=True)
class ConsensusConfig:
    mode: str
    n: int
    f: int
    batch_size: int = 32
    batch_timeout: int = 100
    view: int = 0
    queue_limit: int = 4096
    base_timeout: int = 60
    max_view_changes: int = 8

    def __post_init__(self):
        if self.mode not in (PBFT, CFT):
            raise ConfigInvalid(f"unknown consensus mode {self.mode!r}", "consensus.mode")
        if self.n < 1:
            raise ConfigInvalid("need at least one ordering node", "consensus.n")
        if self.f < 0:
            raise ConfigInvalid("fault budget cannot be negative", "consensus.f")
        if self.mode == PBFT and self.n < 3 * self.f + 1:
            raise ConfigInvalid(
                f"PBFT requires n >= 3f+1 (n={self.n}, f={self.f})", "consensus.f"
            )
        if self.mode == CFT and self.n < 2 * self.f + 1:
            raise ConfigInvalid(
                f"CFT requires n >= 2f+1 (n={self.n}, f={self.f})", "consensus.f"
            )
        if self.batch_size < 1:
            raise ConfigInvalid("batch_size must be positive", "consensus.batch_size")
        if self.batch_timeout < 1:
            raise ConfigInvalid("batch_timeout must be positive", "consensus.batch_timeout")

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1 if self.mode == PBFT else self.n // 2 + 1


@dataclass(frozen=True)
class FaultSpec:
    node_id: int
    kind: str
    at_tick: int = 0

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ConfigInvalid(f"unknown fault kind {self.kind!r}", "faults.kind")

    @property
    def byzantine(self) -> bool:
        return self.kind in BYZANTINE_KINDS


class OSNode:
    """One ordering service node: bounded FIFO queue plus ledger replica."""

    def __init__(self, node_id: int, config: ConsensusConfig, sk: ms.SecretKey,
                 pk: ms.PublicKey, params: ms.SystemParams):
        self.node_id = node_id
        self.config = config
        self.sk = sk
        self.pk = pk
        self.params = params
        self.replica = led.Ledger(params=params)
        self.queue: list[tuple[led.Transaction, int]] = []  # (envelope, enqueue_tick)
        self._positions: dict[bytes, int] = {}
        self._next_position = 0
        self.committed_ids: set[bytes] = set()

    def drop_committed(self, tx_ids) -> None:
        self.committed_ids.update(tx_ids)
        self.queue = [(tx, t) for tx, t in self.queue if tx.tx_id not in self.committed_ids]


def make_cluster(
    params: ms.SystemParams, config: ConsensusConfig, seed: bytes
) -> list[OSNode]:
    """Deterministically keyed ordering nodes sharing one genesis."""
    nodes = []
    for i in range(config.n):
        node_seed = hmac_mod.new(seed, b"osn" + i.to_bytes(4, "big"), hashlib.sha512).digest()[:32]
        sk, pk, _ = ms.keygen(params, node_seed)
        nodes.append(OSNode(i, config, sk, pk, params))
    return nodes


def submit(osn: OSNode, envelope: led.Transaction, now_tick: int = 0) -> int:
    """FIFO enqueue with dedup by tx id; bounded by the config limit."""
    if led.sha256(envelope.body()) != envelope.tx_id:
        raise ValueError("malformed envelope: tx id does not recompute")
    existing = osn._positions.get(envelope.tx_id)
    if existing is not None:
        return existing
    if len(osn.queue) >= osn.config.queue_limit:
        raise QueueFull(f"queue at capacity {osn.config.queue_limit}")
    position = osn._next_position
    osn._next_position += 1
    osn._positions[envelope.tx_id] = position
    osn.queue.append((envelope, now_tick))
    return position


def cut_batch(osn: OSNode, config: ConsensusConfig, now_tick: int) -> led.Block | None:
    """Cut a candidate block when full or when the oldest envelope aged out."""
    if not osn.queue:
        return None
    full = len(osn.queue) >= config.batch_size
    aged = now_tick - osn.queue[0][1] >= config.batch_timeout
    if not (full or aged):
        return None
    take = config.batch_size if full else len(osn.queue)
    txs = [tx for tx, _ in osn.queue[:take]]
    osn.queue = osn.queue[take:]
    return led.make_block(
        osn.replica.height + 1, osn.replica.tip.block_hash, txs, osn.node_id
    )


# --- PBFT ---------------------------------------------------------------------------


@dataclass
class ConsensusOutcome:
    decisions: dict[int, led.Block | None]
    decide_ticks: dict[int, int]
    commit_ticks: dict[int, int]
    views: dict[int, int]
    no_progress: bool = False


def _equivocation_variant(candidate: led.Block) -> led.Block:
    """A second well-formed block the byzantine leader could have cut:
    the same queue minus its newest envelope."""
    if not candidate.txs:
        return candidate
    return led.make_block(
        candidate.height, candidate.prev_hash, list(candidate.txs[:-1]),
        candidate.proposer_id,
    )


def _corrupt(block_bytes: bytes) -> bytes:
    """Flip a bit inside the hashed region so honest nodes always reject."""
    return bytes([block_bytes[0] ^ 0xFF]) + block_bytes[1:]


class _PbftNode:
    def __init__(self, osn: OSNode, config: ConsensusConfig, fault: FaultSpec | None):
        self.osn = osn
        self.id = osn.node_id
        self.config = config
        self.fault = fault
        self.view = config.view
        self.blocks: dict[bytes, led.Block] = {}  # digest -> well-formed block
        self.prepares: dict[tuple[int, bytes], set[int]] = {}
        self.commits: dict[tuple[int, bytes], dict[int, ms.Signature]] = {}
        self.sent_prepare: set[tuple[int, bytes]] = set()
        self.sent_commit: set[tuple[int, bytes]] = set()
        self.lock: tuple[int, bytes] | None = None  # (view, digest)
        self.viewchanges: dict[int, dict[int, tuple[int, bytes] | None]] = {}
        self.vc_sent: set[int] = set()
        self.vc_attempt = 0
        self.proposed_views: set[int] = set()
        self.decided: led.Block | None = None
        self.decide_tick: int | None = None
        self.commit_tick: int | None = None
        self.gave_up = False

    def silent(self) -> bool:
        return self.fault is not None and self.fault.kind == "withhold"

    def crashed(self, tick: int) -> bool:
        return (
            self.fault is not None
            and self.fault.kind == "crash"
            and tick >= self.fault.at_tick
        )


def run_pbft(
    nodes: list[OSNode],
    candidate: led.Block,
    net: SimNetwork,
    faults: tuple[FaultSpec, ...] = (),
    horizon: int = 50_000,
) -> ConsensusOutcome:
    """One agreement instance: every honest node decides the same block,
    or the view-change budget runs out and NoProgress is reported."""
    config = nodes[0].config
    if config.mode != PBFT:
        raise ConfigInvalid("run_pbft requires mode 'pbft'", "consensus.mode")
    n = config.n
    quorum = config.quorum
    fault_of = {fs.node_id: fs for fs in faults}
    st = {nd.node_id: _PbftNode(nd, config, fault_of.get(nd.node_id)) for nd in nodes}
    ids = sorted(st)
    variant = _equivocation_variant(candidate)
    start_tick = net.now

    def leader_of(view: int) -> int:
        return view % n

    def send(src: int, dst: int, mtype: str, payload) -> None:
        s = st[src]
        if s.silent() or s.crashed(net.now):
            return
        net.send(src, dst, mtype, payload)

    def proposal_for(node: _PbftNode, view: int) -> led.Block:
        """The highest reported lock's block if known, else own candidate."""
        locks = [
            info for info in node.viewchanges.get(view, {}).values() if info is not None
        ]
        if node.lock is not None:
            locks.append(node.lock)
        for _, digest in sorted(locks, reverse=True):
            if digest in node.blocks:
                return node.blocks[digest]
        return candidate

    def propose(view: int) -> None:
        lid = leader_of(view)
        node = st[lid]
        if view in node.proposed_views:
            return
        node.proposed_views.add(view)
        kind = node.fault.kind if node.fault else None
        block = proposal_for(node, view)
        node.blocks.setdefault(block.block_hash, block)
        for dst in ids:
            if kind == "equivocate":
                chosen = block if dst % 2 == 0 else variant
                payload = chosen.to_bytes()
            elif kind == "corrupt-payload":
                payload = _corrupt(block.to_bytes())
            else:
                payload = block.to_bytes()
            send(lid, dst, "preprepare", (view, payload))

    def enter_view(node: _PbftNode, view: int) -> None:
        node.view = view
        node.vc_attempt = 0
        delay = config.base_timeout * (2 ** min(view - config.view, 10))
        net.send(node.id, node.id, "timer", view, delay=delay)
        if leader_of(view) == node.id:
            propose(view)
        maybe_progress(node)

    def request_view(node: _PbftNode, target: int) -> None:
        if target in node.vc_sent:
            return
        if target - config.view > config.max_view_changes:
            node.gave_up = True
            return
        node.vc_sent.add(target)
        for dst in ids:
            send(node.id, dst, "viewchange", (target, node.lock))

    def maybe_progress(node: _PbftNode) -> None:
        """Advance prepare quorum → lock+commit → commit quorum → decide."""
        if node.decided is not None:
            return
        for (view, digest), voters in sorted(node.prepares.items()):
            if view != node.view or digest not in node.blocks:
                continue
            key = (view, digest)
            if len(voters) >= quorum and key not in node.sent_commit:
                node.sent_commit.add(key)
                if node.lock is None or view >= node.lock[0]:
                    node.lock = key
                sig = ms.sign(node.osn.sk, led.commit_message(digest), node.osn.params)
                for dst in ids:
                    send(node.id, dst, "commit", (view, digest, sig.to_bytes()))
        for (view, digest), sigs in sorted(node.commits.items()):
            if digest not in node.blocks or len(sigs) < quorum:
                continue
            block = node.blocks[digest]
            chosen = sorted(sigs)[:quorum]
            bitmap = tuple(i in chosen for i in range(n))
            agg = ms.MultiSignature(
                ms.aggregate_signatures([sigs[i] for i in chosen]), bitmap
            )
            final = dataclasses.replace(block, commit_sigs=agg)
            node.decided = final
            node.decide_tick = net.now
            led.commit_block(node.osn.replica, final)
            node.commit_tick = net.now
            node.osn.drop_committed([tx.tx_id for tx in final.txs])
            return

    def handle(node: _PbftNode, src: int, mtype: str, payload) -> None:
        if mtype == "preprepare":
            view, block_bytes = payload
            if src != leader_of(view) or view < node.view:
                return
            try:
                block = led.Block.from_bytes(block_bytes)
            except Exception:
                return
            expected = led.block_hash_of(
                block.height, block.proposer_id, block.prev_hash,
                [tx.leaf_hash() for tx in block.txs],
            )
            if block.block_hash != expected:
                return
            if block.height != node.osn.replica.height + 1:
                return
            if block.prev_hash != node.osn.replica.tip.block_hash:
                return
            digest = block.block_hash
            node.blocks.setdefault(digest, block)
            key = (view, digest)
            votable = node.lock is None or node.lock[1] == digest
            if view == node.view and votable and key not in node.sent_prepare:
                node.sent_prepare.add(key)
                for dst in ids:
                    send(node.id, dst, "prepare", key)
            maybe_progress(node)
        elif mtype == "prepare":
            view, digest = payload
            node.prepares.setdefault((view, digest), set()).add(src)
            maybe_progress(node)
        elif mtype == "commit":
            view, digest, sig_bytes = payload
            try:
                sig = ms.Signature.from_bytes(sig_bytes)
            except Exception:
                return
            node.commits.setdefault((view, digest), {})[src] = sig
            maybe_progress(node)
        elif mtype == "timer":
            view = payload
            if node.decided is not None or node.view != view or node.gave_up:
                return
            node.vc_attempt += 1
            target = node.view + node.vc_attempt
            request_view(node, target)
            if not node.gave_up:
                delay = config.base_timeout * (2 ** min(node.vc_attempt, 10))
                net.send(node.id, node.id, "timer", view, delay=delay)
        elif mtype == "viewchange":
            target, lock_info = payload
            if target <= node.view:
                return
            node.viewchanges.setdefault(target, {})[src] = (
                tuple(lock_info) if lock_info else None
            )
            count = len(node.viewchanges[target])
            if count > config.f and not node.decided:
                request_view(node, target)  # join an in-progress view change
            if count >= quorum:
                enter_view(node, target)

    for node_id in ids:
        enter_view(st[node_id], config.view)

    def all_settled() -> bool:
        return all(
            s.decided is not None or s.gave_up
            for s in st.values()
            if s.fault is None
        )

    while net.pending():
        if net.next_tick() - start_tick > horizon:
            break
        if all_settled():
            break
        d = net.pop()
        node = st.get(d.dst)
        if node is None or node.crashed(d.tick):
            continue
        handle(node, d.src, d.mtype, d.payload)

    honest = [i for i in ids if i not in fault_of]
    return ConsensusOutcome(
        decisions={i: st[i].decided for i in ids},
        decide_ticks={i: st[i].decide_tick for i in ids if st[i].decide_tick is not None},
        commit_ticks={i: st[i].commit_tick for i in ids if st[i].commit_tick is not None},
        views={i: st[i].view for i in ids},
        no_progress=any(st[i].gave_up or st[i].decided is None for i in honest),
    )


# --- CFT ----------------------------------------------------------------------------


def run_cft(
    nodes: list[OSNode],
    candidate: led.Block,
    net: SimNetwork,
    faults: tuple[FaultSpec, ...] = (),
    horizon: int = 50_000,
) -> ConsensusOutcome:
    """Leader-based replication: decided on majority acks; leader crash
    rotates leadership to the next index, deterministically."""
    config = nodes[0].config
    if config.mode != CFT:
        raise ConfigInvalid("run_cft requires mode 'cft'", "consensus.mode")
    for fs in faults:
        if fs.byzantine:
            raise ConfigInvalid(
                "byzantine faults are only meaningful under PBFT", "faults.kind"
            )
    n = config.n
    majority = config.quorum
    fault_of = {fs.node_id: fs for fs in faults}
    ids = sorted(nd.node_id for nd in nodes)
    by_id = {nd.node_id: nd for nd in nodes}
    start_tick = net.now
    max_term = 4 * n  # full rotations before concluding no quorum exists

    crashed_at = {i: fault_of[i].at_tick for i in fault_of}
    term_of = {i: 0 for i in ids}
    acks: dict[int, set[int]] = {i: set() for i in ids}
    ack_sigs: dict[int, dict[int, ms.Signature]] = {i: {} for i in ids}
    decided: dict[int, led.Block | None] = {i: None for i in ids}
    decide_tick: dict[int, int] = {}

    def is_crashed(i: int, tick: int) -> bool:
        return i in crashed_at and tick >= crashed_at[i]

    def send(src: int, dst: int, mtype: str, payload, delay: int | None = None) -> None:
        if is_crashed(src, net.now):
            return
        net.send(src, dst, mtype, payload, delay=delay)

    def start_term(i: int) -> None:
        if term_of[i] % n == i:
            acks[i].clear()
            ack_sigs[i].clear()
            for dst in ids:
                send(i, dst, "append", (term_of[i], candidate.to_bytes()))
        if term_of[i] <= max_term:
            net.send(i, i, "timer", term_of[i], delay=config.base_timeout)

    def commit_locally(i: int, block: led.Block) -> None:
        decided[i] = block
        decide_tick[i] = net.now
        led.commit_block(by_id[i].replica, block)
        by_id[i].drop_committed([tx.tx_id for tx in block.txs])

    def handle(i: int, src: int, mtype: str, payload) -> None:
        if mtype == "append":
            term, block_bytes = payload
            if term < term_of[i] or src != term % n:
                return
            term_of[i] = term
            try:
                block = led.Block.from_bytes(block_bytes)
            except Exception:
                return
            sig = ms.sign(by_id[i].sk, led.commit_message(block.block_hash), by_id[i].params)
            send(i, src, "ack", (term, block.block_hash, sig.to_bytes()))
            net.send(i, i, "timer", term, delay=config.base_timeout)
        elif mtype == "ack":
            term, digest, sig_bytes = payload
            if term != term_of[i] or term % n != i or decided[i] is not None:
                return
            ack_sigs[i][src] = ms.Signature.from_bytes(sig_bytes)
            acks[i].add(src)
            if len(acks[i]) >= majority:
                chosen = sorted(ack_sigs[i])[:majority]
                bitmap = tuple(j in chosen for j in range(n))
                agg = ms.MultiSignature(
                    ms.aggregate_signatures([ack_sigs[i][j] for j in chosen]), bitmap
                )
                final = dataclasses.replace(candidate, commit_sigs=agg)
                commit_locally(i, final)
                for dst in ids:
                    send(i, dst, "commit-note", (term, final.to_bytes()))
        elif mtype == "commit-note":
            _, block_bytes = payload
            if decided[i] is not None:
                return
            commit_locally(i, led.Block.from_bytes(block_bytes))
        elif mtype == "timer":
            term = payload
            if decided[i] is not None or term != term_of[i]:
                return
            term_of[i] = term + 1
            start_term(i)

    for i in ids:
        start_term(i)

    def live_ids(tick: int):
        return [i for i in ids if not is_crashed(i, tick)]

    while net.pending():
        tick = net.next_tick()
        if tick - start_tick > horizon:
            break
        if all(decided[i] is not None for i in live_ids(tick)):
            break
        d = net.pop()
        if d.dst not in by_id or is_crashed(d.dst, d.tick):
            continue
        handle(d.dst, d.src, d.mtype, d.payload)

    live = [i for i in ids if not is_crashed(i, net.now)]
    if live and all(decided[i] is None for i in live):
        raise NoQuorum(f"{len(fault_of)} of {n} nodes crashed; no majority reachable")
    return ConsensusOutcome(
        decisions=decided,
        decide_ticks=dict(decide_tick),
        commit_ticks=dict(decide_tick),
        views=dict(term_of),
    )


# --- dissemination -------------------------------------------------------------------


def gossip(
    block: led.Block,
    peers: list[int],
    net: SimNetwork,
    origin: int | None = None,
    fanout: int = 2,
    max_rounds: int = 64,
) -> dict[int, int]:
    """Round-based push gossip: every informed peer forwards to `fanout`
    random uninformed peers per round. Returns peer → round informed.
    Partitioned or unlucky peers are simply absent from the map."""
    peers = sorted(peers)
    if origin is None:
        origin = peers[0]
    informed = {origin: 0}
    payload = block.to_bytes()
    for rnd in range(1, max_rounds + 1):
        uninformed = [p for p in peers if p not in informed]
        if not uninformed:
            break
        # Each informed peer picks `fanout` random uninformed targets; the
        # shared shuffle spreads picks so coverage grows every round.
        net.rng.shuffle(uninformed)
        senders = sorted(informed)
        slots = iter(uninformed)
        assignments = []
        for i, dst in enumerate(slots):
            assignments.append((senders[(i // fanout) % len(senders)], dst))
            if i + 1 >= fanout * len(senders):
                break
        for src, dst in assignments:
            net.send(src, dst, "gossip", payload, delay=1)
        progress = False
        while net.pending():
            d = net.pop()
            if d.mtype != "gossip":
                continue
            if d.dst not in informed:
                informed[d.dst] = rnd
                progress = True
        if not progress and not any(
            net.reachable(s, u) for s in informed for u in uninformed
        ):
            break
    return informed


def anti_entropy(lagging: led.Ledger, donor: led.Ledger) -> list[led.Block]:
    """Copy the donor's suffix onto the lagging replica. The lagging
    chain must be a prefix of the donor's, else the histories diverged."""
    if donor.height <= lagging.height:
        return []
    anchor = donor.blocks[lagging.height]
    if anchor.block_hash != lagging.tip.block_hash:
        raise DivergentHistory(
            f"replica tip at height {lagging.height} does not match donor history"
        )
    transferred = []
    for block in donor.blocks[lagging.height + 1 :]:
        led.commit_block(lagging, block)
        transferred.append(block)
    return transferred
