"""DHT tests: routing-table invariants, iterative lookup against a
brute-force k-closest oracle, replication, integrity, and crash
tolerance. Wider sweeps (1,000 payloads) run in the acceptance module.
"""

import hashlib
import random

import pytest

from cpschain import dhtstore as dht
from cpschain.errors import (
    BootstrapUnreachable,
    ConfigInvalid,
    IntegrityFailure,
    NotFound,
    PayloadTooLarge,
    WireError,
)
from cpschain.simnet import SimNetwork


def build(n, seed=0, **kwargs):
    """A network of n nodes joined sequentially through the first."""
    net = dht.DhtNetwork(seed=seed, **kwargs)
    nodes = []
    for i in range(n):
        node = net.spawn(b"node" + i.to_bytes(4, "big") + seed.to_bytes(4, "big"))
        dht.join(net, node, nodes[0].node_id if nodes else None)
        nodes.append(node)
    return net, nodes


def oracle_k_closest(net, target, k):
    """Brute force: sort every live id by XOR distance, take k."""
    if isinstance(target, bytes):
        target = dht.key_id(target)
    return sorted(net.live_ids(), key=lambda n: n ^ target)[:k]


# --- ids, distance, addresses ---------------------------------------------------------


def test_distance_axioms():
    assert dht.distance(0x5A, 0x5A) == 0
    assert dht.distance(7, 12) == dht.distance(12, 7)
    assert dht.distance(0x01, 0x03) == 0x02


def test_node_ids_uniform_and_distinct():
    ids = [dht.node_id_from_seed(bytes([i]) * 8) for i in range(64)]
    assert len(set(ids)) == 64
    assert all(0 <= i < 2**160 for i in ids)
    high_bit = sum(1 for i in ids if i >> 159)
    assert 16 <= high_bit <= 48  # roughly half the ids land in the top half


def test_content_address_is_payload_hash():
    payload = b"pressure=42.1;valve=open"
    assert dht.content_address(payload) == hashlib.sha256(payload).digest()
    assert dht.content_address(payload) == dht.content_address(payload)


def test_address_text_round_trip():
    addr = dht.content_address(b"x")
    text = dht.format_address(addr)
    assert len(text) == 64 and text == text.lower()
    assert dht.parse_address(text) == addr
    for bad in ["", "ab", text.upper(), text[:-1] + "g", text + "00"]:
        with pytest.raises(WireError):
            dht.parse_address(bad)


def test_network_config_validation():
    with pytest.raises(ConfigInvalid):
        dht.DhtNetwork(k=0)
    with pytest.raises(ConfigInvalid):
        dht.DhtNetwork(alpha=0)


# --- routing table ---------------------------------------------------------------------


def test_bucket_invariants_after_joins():
    _, nodes = build(32, seed=11)
    for node in nodes:
        seen = set()
        for i, bucket in enumerate(node.table.buckets):
            assert len(bucket) <= node.table.k
            for nid, _ in bucket:
                assert nid != node.node_id
                assert dht.bucket_index(node.node_id, nid) == i
                assert nid not in seen
                seen.add(nid)


def test_bucket_eviction_prefers_long_lived_contacts():
    table = dht.RoutingTable(own_id=0, k=2)
    table.observe(4, tick=1)
    table.observe(5, tick=2)  # ids 4..7 share bucket 2 relative to id 0
    table.observe(6, tick=3, evict_dead=lambda nid: False)
    assert [nid for nid, _ in table.buckets[2]] == [4, 5]  # newcomer dropped
    table.observe(6, tick=4, evict_dead=lambda nid: nid == 4)
    assert [nid for nid, _ in table.buckets[2]] == [5, 6]  # dead head evicted
    table.observe(5, tick=9)  # refresh moves to tail with a new timestamp
    assert table.buckets[2] == [(6, 4), (5, 9)]
    table.observe(0, tick=10)  # own id is never stored
    assert all(0 not in {nid for nid, _ in b} for b in table.buckets)


def test_bucket_index_rejects_self():
    with pytest.raises(ValueError):
        dht.bucket_index(9, 9)


# --- join ------------------------------------------------------------------------------


def test_two_node_join_routes_both_ways():
    net, (a, b) = build(2, seed=21)
    assert b.node_id in a.table.contacts()
    assert a.node_id in b.table.contacts()
    assert set(dht.lookup(net, a.node_id, initiator=b.node_id).closest) == {
        a.node_id,
        b.node_id,
    }


def test_join_dead_bootstrap():
    net = dht.DhtNetwork(seed=22)
    a = net.spawn(b"a")
    dht.join(net, a, None)  # genesis node has nothing to contact
    net.crash(a.node_id)
    b = net.spawn(b"b")
    with pytest.raises(BootstrapUnreachable):
        dht.join(net, b, a.node_id)
    with pytest.raises(BootstrapUnreachable):
        dht.join(net, b, b.node_id)  # a node cannot bootstrap off itself


def test_new_node_discoverable_from_all(params=None):
    net, nodes = build(64, seed=23)
    joiner = net.spawn(b"late-arrival")
    dht.join(net, joiner, nodes[0].node_id)
    for node in nodes:
        found = dht.lookup(net, joiner.node_id, initiator=node.node_id).closest
        assert found[0] == joiner.node_id  # exact-id match must surface it first


# --- lookup ----------------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 5, 17, 64, 128])
def test_lookup_equals_brute_force(n):
    net, nodes = build(n, seed=n)
    rng = random.Random(n)
    for trial in range(30):
        if trial % 2:
            target = rng.getrandbits(160)
        else:
            target = dht.content_address(rng.randbytes(8))
        initiator = rng.choice(nodes).node_id
        res = dht.lookup(net, target, initiator=initiator)
        assert set(res.closest) == set(oracle_k_closest(net, target, net.k))


def test_lookup_own_id_self_first():
    net, nodes = build(16, seed=31)
    res = dht.lookup(net, nodes[5].node_id, initiator=nodes[5].node_id)
    assert res.closest[0] == nodes[5].node_id


def test_lookup_empty_network():
    net = dht.DhtNetwork(seed=32)
    res = dht.lookup(net, 12345)
    assert res.closest == [] and res.rounds == 0 and res.queried == 0


def test_lookup_hop_bound_across_seeds():
    bound = 8  # ceil(log2(64)) + 2
    for seed in range(100):
        net, nodes = build(64, seed=1000 + seed)
        rng = random.Random(seed)
        target = rng.getrandbits(160)
        res = dht.lookup(net, target, initiator=rng.choice(nodes).node_id)
        assert res.rounds <= bound
        assert set(res.closest) == set(oracle_k_closest(net, target, net.k))


def test_lookup_routes_around_crashes():
    net, nodes = build(64, seed=33)
    rng = random.Random(33)
    for node in rng.sample(nodes, 8):
        net.crash(node.node_id)
    for _ in range(20):
        target = rng.getrandbits(160)
        initiator = rng.choice([n for n in nodes if not n.crashed(net.net.now)])
        res = dht.lookup(net, target, initiator=initiator.node_id)
        assert set(res.closest) == set(oracle_k_closest(net, target, net.k))


# --- put / get -------------------------------------------------------------------------


def test_put_get_round_trip_and_replication():
    net, nodes = build(32, seed=41)
    payload = b"spindle vibration trace #7"
    addr = dht.put(net, payload)
    assert addr == hashlib.sha256(payload).digest()
    assert dht.get(net, addr) == payload
    holders = {n.node_id for n in nodes if addr in n.store}
    assert holders == set(oracle_k_closest(net, addr, net.k))
    # storing the same payload again changes nothing
    assert dht.put(net, payload) == addr
    assert sum(1 for n in nodes if addr in n.store) == net.k


def test_get_never_stored():
    net, _ = build(8, seed=42)
    with pytest.raises(NotFound):
        dht.get(net, dht.content_address(b"never stored"))


def test_put_payload_cap():
    net, _ = build(8, seed=43)
    exactly = b"\x00" * (1 << 20)
    addr = dht.put(net, exactly)  # the cap is inclusive
    assert dht.get(net, addr) == exactly
    with pytest.raises(PayloadTooLarge):
        dht.put(net, exactly + b"\x00")


def test_corrupt_replicas_skipped_never_returned():
    net, nodes = build(32, seed=44)
    payload = b"calibration table"
    addr = dht.put(net, payload)
    holders = [n for n in nodes if addr in n.store]
    assert len(holders) == net.k
    for h in holders[:-1]:
        h.store[addr] = h.store[addr] + b"!"  # corrupt k-1 of k
    assert dht.get(net, addr) == payload  # surviving replica answers
    holders[-1].store[addr] = b"junk"
    with pytest.raises(IntegrityFailure):
        dht.get(net, addr)  # tampered bytes are never returned


def test_survives_crashing_half_the_holders():
    net, nodes = build(32, seed=45)
    payload = b"work order 5521"
    addr = dht.put(net, payload)
    holders = [n for n in nodes if addr in n.store]
    for h in holders[: net.k // 2]:
        net.crash(h.node_id)
    assert dht.get(net, addr) == payload


def test_read_your_writes_sweep():
    net, _ = build(64, seed=46)
    rng = random.Random(46)
    stored = []
    for _ in range(150):
        payload = rng.randbytes(rng.randrange(0, 2048))
        stored.append((dht.put(net, payload), payload))
    for addr, payload in stored:
        assert dht.get(net, addr) == payload


def test_deterministic_replay():
    def run():
        net = dht.DhtNetwork(net=SimNetwork(seed=47, trace=True))
        nodes = []
        for i in range(12):
            node = net.spawn(b"replay" + bytes([i]))
            dht.join(net, node, nodes[0].node_id if nodes else None)
            nodes.append(node)
        addr = dht.put(net, b"replayed payload")
        value = dht.get(net, addr)
        return addr, value, net.net.trace

    a1, v1, t1 = run()
    a2, v2, t2 = run()
    assert (a1, v1) == (a2, v2)
    assert t1 == t2
