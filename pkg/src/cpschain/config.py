"""Scenario configuration: one structured JSON file describing a whole run.

The file has seven sections — consortium, consensus, network, dht,
workload, faults, output — each with documented defaults, so an empty
object ``{}`` is a valid configuration. Values resolve with precedence
flag > file > default: command-line flags override file values, which
override the defaults below. All shape and cross-field problems surface
as `ConfigInvalid` carrying a dotted field path.
"""

from __future__ import annotations

import json

from importlib import resources
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from .bench import AUTH_CERT, AUTH_MS, WorkloadSpec
from .errors import ConfigInvalid, IoFailure
from .ordering import CFT, PBFT, ConsensusConfig, FaultSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConsortiumSection(_Section):
    """The endorsing peer set and the run's master seed."""

    n: int = 4
    t: int = 3
    seed: int = 42


class ConsensusSection(_Section):
    """Ordering service cluster shape and batching knobs."""

    mode: str = PBFT
    nodes: int = 3
    f: int = 0
    batch_size: int = 32
    batch_timeout: int = 100
    queue_limit: int = 256


class NetworkSection(_Section):
    """Simulated link behaviour for protocol-level runs."""

    latency_band: tuple[int, int] = (1, 3)
    drop_rate: float = 0.0
    partitions: list[list[int]] = []


class DhtSection(_Section):
    """Content-addressed store shape."""

    k: int = 4
    alpha: int = 2
    nodes: int = 16


class WorkloadSection(_Section):
    """Benchmark sweep: the scenario matrix is rates x peer_counts."""

    rates: list[int] = [100]
    peer_counts: list[int] = [4]
    duration: int = 5
    mix: float = 0.5
    device_count: int = 8
    auth_mode: str = AUTH_MS


class FaultEntry(_Section):
    node_id: int
    kind: str
    at_tick: int = 0


class OutputSection(_Section):
    """Artifact locations; file names are joined onto `dir`."""

    dir: str = "out"
    csv: str = "bench.csv"
    chart: str = "bench.svg"


class ScenarioConfig(_Section):
    consortium: ConsortiumSection = ConsortiumSection()
    consensus: ConsensusSection = ConsensusSection()
    network: NetworkSection = NetworkSection()
    dht: DhtSection = DhtSection()
    workload: WorkloadSection = WorkloadSection()
    faults: list[FaultEntry] = []
    output: OutputSection = OutputSection()


def _cross_checks(cfg: ScenarioConfig) -> None:
    co, cs, net, dht, wl = cfg.consortium, cfg.consensus, cfg.network, cfg.dht, cfg.workload
    if co.n < 1:
        raise ConfigInvalid("consortium needs at least one peer", "consortium.n")
    if not 1 <= co.t <= co.n:
        raise ConfigInvalid(
            f"threshold must lie in 1..{co.n} (consortium size)", "consortium.t"
        )

    if cs.mode not in (PBFT, CFT):
        raise ConfigInvalid(f"mode must be {PBFT!r} or {CFT!r}", "consensus.mode")
    if cs.nodes < 1:
        raise ConfigInvalid("ordering cluster needs at least one node", "consensus.nodes")
    if cs.f < 0:
        raise ConfigInvalid("fault budget cannot be negative", "consensus.f")
    if cs.mode == PBFT and cs.nodes < 3 * cs.f + 1:
        raise ConfigInvalid(
            f"pbft with f={cs.f} needs at least {3 * cs.f + 1} nodes", "consensus.f"
        )
    if cs.mode == CFT and cs.nodes < 2 * cs.f + 1:
        raise ConfigInvalid(
            f"cft with f={cs.f} needs at least {2 * cs.f + 1} nodes", "consensus.f"
        )
    if cs.batch_size < 1:
        raise ConfigInvalid("batch_size must be positive", "consensus.batch_size")
    if cs.batch_timeout < 1:
        raise ConfigInvalid("batch_timeout must be positive", "consensus.batch_timeout")
    if cs.queue_limit < 1:
        raise ConfigInvalid("queue_limit must be positive", "consensus.queue_limit")

    lo, hi = net.latency_band
    if lo < 0 or hi < lo:
        raise ConfigInvalid(
            "latency band must satisfy 0 <= low <= high", "network.latency_band"
        )
    if not 0.0 <= net.drop_rate <= 1.0:
        raise ConfigInvalid("drop rate must lie in [0, 1]", "network.drop_rate")
    seen: set[int] = set()
    for group in net.partitions:
        for node in group:
            if node < 0:
                raise ConfigInvalid("node ids cannot be negative", "network.partitions")
            if node in seen:
                raise ConfigInvalid(
                    f"node {node} appears in two partition groups", "network.partitions"
                )
            seen.add(node)

    if dht.k < 1:
        raise ConfigInvalid("k must be positive", "dht.k")
    if dht.alpha < 1:
        raise ConfigInvalid("alpha must be positive", "dht.alpha")
    if dht.nodes < 1:
        raise ConfigInvalid("dht needs at least one node", "dht.nodes")

    if not wl.rates or any(r < 1 for r in wl.rates):
        raise ConfigInvalid("rates must be a non-empty list of positive tx/s", "workload.rates")
    if not wl.peer_counts or any(p < 1 for p in wl.peer_counts):
        raise ConfigInvalid(
            "peer_counts must be a non-empty list of positive counts", "workload.peer_counts"
        )
    if wl.duration < 1:
        raise ConfigInvalid("duration must be at least one second", "workload.duration")
    if not 0.0 <= wl.mix <= 1.0:
        raise ConfigInvalid("read fraction must lie in [0, 1]", "workload.mix")
    if wl.device_count < 1:
        raise ConfigInvalid("device_count must be positive", "workload.device_count")
    if wl.auth_mode not in (AUTH_MS, AUTH_CERT):
        raise ConfigInvalid(
            f"auth_mode must be {AUTH_MS!r} or {AUTH_CERT!r}", "workload.auth_mode"
        )

    for i, entry in enumerate(cfg.faults):
        try:
            FaultSpec(node_id=entry.node_id, kind=entry.kind, at_tick=entry.at_tick)
        except ConfigInvalid as exc:
            field = exc.field_path.split(".")[-1]
            raise ConfigInvalid(str(exc.args[0]), f"faults[{i}].{field}") from exc


def parse_config(data: dict) -> ScenarioConfig:
    """Validate a decoded JSON object into a ScenarioConfig."""
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = ".".join(str(part) for part in first["loc"])
        raise ConfigInvalid(first["msg"], path) from exc
    _cross_checks(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    """Read and validate a JSON scenario file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}", "") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config root must be a JSON object", "")
    return parse_config(data)


def apply_overrides(cfg: ScenarioConfig, *, seed: int | None = None,
                    out_dir: str | None = None) -> ScenarioConfig:
    """Fold command-line flags over file values (flag > file > default)."""
    updates: dict = {}
    if seed is not None:
        updates["consortium"] = cfg.consortium.model_copy(update={"seed": seed})
    if out_dir is not None:
        updates["output"] = cfg.output.model_copy(update={"dir": str(out_dir)})
    if not updates:
        return cfg
    patched = cfg.model_copy(update=updates)
    _cross_checks(patched)
    return patched


def to_consensus_config(cfg: ScenarioConfig) -> ConsensusConfig:
    cs = cfg.consensus
    return ConsensusConfig(
        mode=cs.mode,
        n=cs.nodes,
        f=cs.f,
        batch_size=cs.batch_size,
        batch_timeout=cs.batch_timeout,
        queue_limit=cs.queue_limit,
    )


def to_workload_specs(cfg: ScenarioConfig) -> list[WorkloadSpec]:
    """Expand the workload matrix into one spec per (rate, peer count)."""
    wl = cfg.workload
    consensus = to_consensus_config(cfg)
    return [
        WorkloadSpec(
            target_rate=rate,
            duration=wl.duration,
            mix=wl.mix,
            device_count=wl.device_count,
            peer_count=peers,
            consensus=consensus,
            auth_mode=wl.auth_mode,
            seed=cfg.consortium.seed,
        )
        for peers in wl.peer_counts
        for rate in wl.rates
    ]


def bundled_config_path(name: str) -> Path:
    """Path of a configuration shipped inside the package."""
    root = resources.files("cpschain") / "configs" / name
    with resources.as_file(root) as concrete:
        return Path(concrete)
