"""Request/response schemas for the HTTP service.

Binary protocol objects travel as lowercase hex strings; everything
else is plain JSON. Error responses share one shape: `error` is the
exception class name, `message` the human-readable cause, and
`field_path` the dotted config location when one exists.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ErrorBody(_Model):
    error: str
    message: str
    field_path: str | None = None


class HealthResponse(_Model):
    status: str
    service: str


class KeysRequest(_Model):
    n: int = 4
    t: int = 3
    seed: int = 42


class KeysResponse(_Model):
    n: int
    t: int
    seed: int
    roster: list[str]  # consortium public keys, hex
    pops: list[str]  # proofs of possession, hex


class RegisterRequest(_Model):
    device_id: str
    n: int = 4
    t: int = 3
    seed: int = 42
    unreachable: list[int] = Field(default_factory=list)
    consensus: dict = Field(default_factory=dict)  # ConsensusSection values


class RegisterResponse(_Model):
    device_id: str
    transcript: list[str]
    credential: str  # serialized credential, hex
    pk_full: str  # combined public key, hex
    verified: bool  # offline verify_credential result
    ledger: str  # exported one-block chain carrying the record, hex


class BenchRequest(_Model):
    config: dict = Field(default_factory=dict)  # ScenarioConfig sections
    jobs: int = 1
    trace: bool = False


class BenchResponse(_Model):
    scenarios: list[str]
    csv: str
    svg: str
    events: dict[str, list[str]]  # populated only when trace is set
    accounting: dict[str, dict[str, int]]


class LedgerVerifyRequest(_Model):
    ledger: str  # exported chain bytes, hex


class LedgerVerifyResponse(_Model):
    ok: bool
    blocks: int  # parsed block count (0 when the file cannot be parsed)


class DhtParams(_Model):
    k: int = 4
    alpha: int = 2
    nodes: int = 16
    seed: int = 42


class DhtPutRequest(DhtParams):
    payload: str  # hex
    stored: dict[str, str] = Field(default_factory=dict)  # address -> payload hex


class DhtPutResponse(_Model):
    address: str
    replicas: int
    stored: dict[str, str]  # updated mapping for the caller to persist


class DhtGetRequest(DhtParams):
    address: str
    stored: dict[str, str] = Field(default_factory=dict)


class DhtGetResponse(_Model):
    address: str
    payload: str  # hex
