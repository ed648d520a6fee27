"""Deterministic discrete-tick message network.

Everything the consensus and gossip code observes — delivery order,
latency draws, drops — derives from one seeded RNG and a global send
sequence number, so identical (seed, config, workload) reproduces the
identical event stream bit for bit. There are no sockets and no wall
clock; a tick is the only notion of time.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Delivery:
    tick: int
    src: int
    dst: int
    mtype: str
    payload: object


class SimNetwork:
    """Event heap keyed by (deliver_tick, seq): seq is assigned at send
    time, which makes simultaneous deliveries totally ordered."""

    def __init__(
        self,
        seed: int | bytes = 0,
        latency: tuple[int, int] = (1, 3),
        drop_prob: float = 0.0,
        trace: bool = False,
    ):
        if isinstance(seed, bytes):
            seed = int.from_bytes(hashlib.sha256(seed).digest()[:8], "big")
        self.rng = random.Random(seed)
        self.latency = latency
        self.drop_prob = drop_prob
        self.now = 0
        self._heap: list[tuple[int, int, Delivery]] = []
        self._seq = 0
        self._partitions: list[frozenset[int]] = []
        self.trace: list[str] | None = [] if trace else None
        self.sent = 0
        self.dropped = 0

    # --- topology -----------------------------------------------------------------

    def set_partitions(self, groups) -> None:
        """Nodes in different groups cannot exchange messages."""
        self._partitions = [frozenset(g) for g in groups]

    def heal(self) -> None:
        self._partitions = []

    def reachable(self, src: int, dst: int) -> bool:
        if not self._partitions:
            return True
        for group in self._partitions:
            if src in group:
                return dst in group
        return all(dst not in group for group in self._partitions)

    # --- sending ------------------------------------------------------------------

    def send(self, src: int, dst: int, mtype: str, payload, delay: int | None = None):
        self.sent += 1
        if not self.reachable(src, dst):
            self.dropped += 1
            return
        if self.drop_prob and src != dst and self.rng.random() < self.drop_prob:
            self.dropped += 1
            return
        if delay is None:
            lo, hi = self.latency
            delay = self.rng.randint(lo, hi) if hi > lo else lo
        self._seq += 1
        d = Delivery(self.now + delay, src, dst, mtype, payload)
        heapq.heappush(self._heap, (d.tick, self._seq, d))

    def broadcast(self, src: int, dsts, mtype: str, payload) -> None:
        for dst in dsts:
            if dst != src:
                self.send(src, dst, mtype, payload)

    # --- delivery -----------------------------------------------------------------

    def pending(self) -> int:
        return len(self._heap)

    def next_tick(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Delivery | None:
        """Deliver the next event, advancing the clock to its tick."""
        if not self._heap:
            return None
        tick, _, d = heapq.heappop(self._heap)
        self.now = max(self.now, tick)
        if self.trace is not None:
            digest = _payload_digest(d.payload)
            self.trace.append(f"{d.tick},{d.src},{d.dst},{d.mtype},{digest}")
        return d


def _payload_digest(payload) -> str:
    if payload is None:
        data = b""
    elif isinstance(payload, bytes):
        data = payload
    elif hasattr(payload, "to_bytes") and not isinstance(payload, int):
        data = payload.to_bytes()
    else:
        data = repr(payload).encode()
    return hashlib.sha256(data).hexdigest()[:12]
