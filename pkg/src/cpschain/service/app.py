"""HTTP service exposing the framework over JSON.

Each endpoint is a stateless wrapper around the core modules: the
request carries every input (including the seed), so identical requests
produce identical responses. Framework errors map onto a stable status
contract — 400 for configuration problems (with the offending field
path), 409 for protocol failures (threshold unmet, content not found,
and so on) — which the command-line client translates into exit codes.
"""

from __future__ import annotations

import hashlib
import hmac

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import ValidationError as PydanticValidationError

import cpschain.mscrypto as ms

from .. import bench as bench_mod
from .. import config as config_mod
from .. import dhtstore as dht
from .. import ledger as led
from .. import ordering
from .. import registry
from ..errors import ConfigInvalid, CpschainError, IoFailure, NoProgress, WireError
from ..simnet import SimNetwork
from .models import (
    BenchRequest,
    BenchResponse,
    DhtGetRequest,
    DhtGetResponse,
    DhtPutRequest,
    DhtPutResponse,
    HealthResponse,
    KeysRequest,
    KeysResponse,
    LedgerVerifyRequest,
    LedgerVerifyResponse,
    RegisterRequest,
    RegisterResponse,
)

SERVICE_NAME = "cpschain"

_CONFIG_ERRORS = (ConfigInvalid, IoFailure)


def _fold(seed: int, label: bytes) -> bytes:
    """One integer seed, independent byte seeds per component."""
    return hmac.new(str(seed).encode(), label, hashlib.sha256).digest()


def _parse_hex(value: str, what: str) -> bytes:
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise WireError(f"{what} is not valid hex: {exc}") from exc


def _consortium(n: int, t: int, seed: int):
    if not 1 <= t <= n:
        raise ConfigInvalid(f"threshold must lie in 1..{n} (consortium size)", "consortium.t")
    return registry.make_consortium(
        ms.DEFAULT_PARAMS, n, _fold(seed, b"consortium"), threshold=t
    )


def _record_on_chain(result, peers, consensus: dict, seed: int) -> tuple[bytes, list[str]]:
    """Commit the fresh credential through endorsement and ordering;
    returns the exported chain and the transcript lines it adds."""
    params = ms.DEFAULT_PARAMS
    device_id = result.credential.device_id
    roster = peers[0].roster
    policy = led.default_policy(roster, {device_id: frozenset(led.Action)})
    tx = led.propose(
        result.credential,
        result.sk_full,
        led.Action.UPDATE,
        led.registration_key(device_id),
        result.credential.to_bytes(),
        clock=0,
        params=params,
    )
    world = led.WorldState()
    endorsements = [led.endorse(p, tx, world, policy) for p in peers]
    envelope = led.collect(tx, endorsements, policy, params)

    try:
        section = config_mod.ConsensusSection(**consensus)
    except PydanticValidationError as exc:
        first = exc.errors()[0]
        raise ConfigInvalid(
            first["msg"], "consensus." + ".".join(str(p) for p in first["loc"])
        ) from exc
    cfg = ordering.ConsensusConfig(
        mode=section.mode,
        n=section.nodes,
        f=section.f,
        batch_size=section.batch_size,
        batch_timeout=section.batch_timeout,
        queue_limit=section.queue_limit,
    )
    cluster = ordering.make_cluster(params, cfg, _fold(seed, b"ordering"))
    net = SimNetwork(seed=_fold(seed, b"ordering-net"))
    for node in cluster:
        ordering.submit(node, envelope, 0)
    block = ordering.cut_batch(cluster[0], cfg, now_tick=cfg.batch_timeout)
    assert block is not None  # an aged single-envelope queue always cuts
    run = ordering.run_pbft if cfg.mode == ordering.PBFT else ordering.run_cft
    outcome = run(cluster, block, net)
    decided = outcome.decisions.get(0)
    if decided is None:
        raise NoProgress("ordering did not commit the registration")
    lines = [f"commit {decided.height} {decided.block_hash.hex()}"]
    return cluster[0].replica.export_bytes(), lines


def create_app() -> FastAPI:
    app = FastAPI(title=SERVICE_NAME, docs_url=None, redoc_url=None)

    @app.exception_handler(CpschainError)
    async def framework_error(_request, exc: CpschainError):
        body = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, _CONFIG_ERRORS):
            body["field_path"] = getattr(exc, "field_path", "") or None
            return JSONResponse(status_code=400, content=body)
        return JSONResponse(status_code=409, content=body)

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        return HealthResponse(status="ok", service=SERVICE_NAME)

    @app.post("/keys", response_model=KeysResponse)
    async def keys(req: KeysRequest) -> KeysResponse:
        peers = _consortium(req.n, req.t, req.seed)
        return KeysResponse(
            n=req.n,
            t=req.t,
            seed=req.seed,
            roster=[p.pk.to_bytes().hex() for p in peers],
            pops=[p.pop.to_bytes().hex() for p in peers],
        )

    @app.post("/register", response_model=RegisterResponse)
    async def register(req: RegisterRequest) -> RegisterResponse:
        if not req.device_id:
            raise ConfigInvalid("device_id must not be empty", "device_id")
        peers = _consortium(req.n, req.t, req.seed)
        device_id = req.device_id.encode()
        result = registry.register_device(
            ms.DEFAULT_PARAMS,
            peers,
            device_id,
            _fold(req.seed, b"device:" + device_id),
            silent=tuple(req.unreachable),
        )
        verified = registry.verify_credential(
            result.credential, peers[0].roster, req.t, ms.DEFAULT_PARAMS
        )
        ledger_bytes, commit_lines = _record_on_chain(
            result, peers, req.consensus, req.seed
        )
        return RegisterResponse(
            device_id=req.device_id,
            transcript=[*result.transcript, *commit_lines],
            credential=result.credential.to_bytes().hex(),
            pk_full=result.credential.pk_full.to_bytes().hex(),
            verified=verified,
            ledger=ledger_bytes.hex(),
        )

    @app.post("/bench", response_model=BenchResponse)
    async def run_bench(req: BenchRequest) -> BenchResponse:
        cfg = config_mod.parse_config(req.config)
        if req.jobs < 1:
            raise ConfigInvalid("jobs must be positive", "jobs")
        specs = config_mod.to_workload_specs(cfg)
        report = bench_mod.run_sweep(specs, jobs=req.jobs)
        return BenchResponse(
            scenarios=sorted(report.specs),
            csv=bench_mod.csv_text(report),
            svg=bench_mod.render_chart(report),
            events=report.events if req.trace else {},
            accounting=report.accounting,
        )

    @app.post("/ledger/verify", response_model=LedgerVerifyResponse)
    async def verify_ledger(req: LedgerVerifyRequest) -> LedgerVerifyResponse:
        try:
            blocks = led.load_ledger_bytes(bytes.fromhex(req.ledger))
        except (WireError, ValueError):
            return LedgerVerifyResponse(ok=False, blocks=0)
        return LedgerVerifyResponse(ok=led.verify_chain(blocks), blocks=len(blocks))

    def _build_dht(req: DhtPutRequest | DhtGetRequest) -> dht.DhtNetwork:
        network = dht.DhtNetwork(
            seed=_fold(req.seed, b"dht-net"), k=req.k, alpha=req.alpha
        )
        if req.nodes < 1:
            raise ConfigInvalid("dht needs at least one node", "dht.nodes")
        first: int | None = None
        for i in range(req.nodes):
            node = network.spawn(_fold(req.seed, b"dht-node:%d" % i))
            dht.join(network, node, first)
            if first is None:
                first = node.node_id
        # Rebuild previously stored content through the normal protocol so
        # placement matches what a long-lived network would hold.
        for address in sorted(req.stored):
            restored = dht.put(network, bytes.fromhex(req.stored[address]))
            if restored.hex() != address:
                raise IoFailure(f"stored state corrupt: {address} does not recompute")
        return network

    @app.post("/dht/put", response_model=DhtPutResponse)
    async def dht_put(req: DhtPutRequest) -> DhtPutResponse:
        payload = _parse_hex(req.payload, "payload")
        network = _build_dht(req)
        address = dht.put(network, payload)
        holders = sum(
            1 for node in network.nodes.values() if address in node.store
        )
        stored = dict(req.stored)
        stored[address.hex()] = req.payload
        return DhtPutResponse(address=address.hex(), replicas=holders, stored=stored)

    @app.post("/dht/get", response_model=DhtGetResponse)
    async def dht_get(req: DhtGetRequest) -> DhtGetResponse:
        address = dht.parse_address(req.address)
        network = _build_dht(req)
        payload = dht.get(network, address)
        return DhtGetResponse(address=req.address, payload=payload.hex())

    return app
