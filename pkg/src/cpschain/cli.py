"""Command-line client for the framework.

Every subcommand is a thin wrapper over the HTTP service: the client
builds a request from the loaded scenario configuration, drives the
ASGI app in process (no socket), and writes the returned artifacts
under the configured output directory.

Values resolve flag > file > default. Exit codes are a stable contract:
0 success, 1 protocol or verification failure, 2 configuration or I/O
failure.
"""

from __future__ import annotations

import asyncio
import json
import re
import sys

from pathlib import Path

import click
import httpx

from . import config as config_mod
from .errors import ConfigInvalid, CpschainError
from .service import create_app

EXIT_OK = 0
EXIT_PROTOCOL = 1
EXIT_CONFIG = 2


class ServiceClient:
    """In-process HTTP client: requests traverse the real ASGI stack."""

    def __init__(self, app=None):
        self._app = app if app is not None else create_app()

    def post(self, path: str, payload: dict) -> httpx.Response:
        async def go():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://cpschain.service"
            ) as client:
                return await client.post(path, json=payload)

        return asyncio.run(go())


def _fail(code: int, name: str, message: str, field_path: str | None = None):
    where = f" at {field_path}" if field_path else ""
    click.echo(f"error: {name}{where}: {message}", err=True)
    sys.exit(code)


def _call(client: ServiceClient, path: str, payload: dict) -> dict:
    response = client.post(path, payload)
    if response.status_code == 200:
        return response.json()
    try:
        body = response.json()
    except ValueError:
        body = {}
    if isinstance(body.get("detail"), (dict, list)):
        detail = body["detail"]
        body = detail if isinstance(detail, dict) else {"message": str(detail)}
    name = body.get("error", f"HTTP{response.status_code}")
    message = str(body.get("message") or body.get("detail") or response.text)
    code = EXIT_CONFIG if response.status_code in (400, 422) else EXIT_PROTOCOL
    _fail(code, name, message, body.get("field_path"))


def _load_scenario(config_path, seed, out_dir) -> config_mod.ScenarioConfig:
    try:
        cfg = (
            config_mod.load_config(config_path)
            if config_path is not None
            else config_mod.ScenarioConfig()
        )
        return config_mod.apply_overrides(cfg, seed=seed, out_dir=out_dir)
    except ConfigInvalid as exc:
        _fail(EXIT_CONFIG, "ConfigInvalid", str(exc), exc.field_path)
    except CpschainError as exc:  # IoFailure: unreadable file
        _fail(EXIT_CONFIG, type(exc).__name__, str(exc))


def _ensure_out(cfg: config_mod.ScenarioConfig) -> Path:
    out = Path(cfg.output.dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail(EXIT_CONFIG, "IoFailure", f"cannot create {out}: {exc}")
    return out


def _safe_name(raw: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", raw)


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path),
              help="Scenario file (JSON); omit for defaults.")
@click.option("--seed", type=int, default=None,
              help="Override the configured master seed.")
@click.option("--trace", is_flag=True, help="Also write per-scenario event logs.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Parallel scenario workers for bench.")
@click.option("--out-dir", type=click.Path(path_type=Path), default=None,
              help="Override the configured output directory.")
@click.pass_context
def main(ctx, config_path, seed, trace, jobs, out_dir):
    """Certificateless consortium framework: registration, ledger, DHT, bench."""
    if jobs < 1:
        _fail(EXIT_CONFIG, "ConfigInvalid", "jobs must be positive", "jobs")
    ctx.obj = {
        "cfg": _load_scenario(config_path, seed, out_dir),
        "trace": trace,
        "jobs": jobs,
        "client": ServiceClient(),
    }


@main.group()
def keys():
    """Key ceremonies."""


@keys.command("gen")
@click.pass_obj
def keys_gen(obj):
    """Write the consortium roster (public keys + possession proofs)."""
    cfg = obj["cfg"]
    co = cfg.consortium
    data = _call(obj["client"], "/keys", {"n": co.n, "t": co.t, "seed": co.seed})
    out = _ensure_out(cfg)
    path = out / "consortium.json"
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    click.echo(f"wrote {path} ({data['n']} peers, threshold {data['t']})")


@main.command()
@click.argument("device_id")
@click.pass_obj
def register(obj, device_id):
    """Enroll DEVICE_ID with the consortium and record it on chain."""
    cfg = obj["cfg"]
    co = cfg.consortium
    unreachable = sorted({f.node_id for f in cfg.faults if f.kind == "crash"})
    data = _call(obj["client"], "/register", {
        "device_id": device_id,
        "n": co.n,
        "t": co.t,
        "seed": co.seed,
        "unreachable": unreachable,
        "consensus": cfg.consensus.model_dump(),
    })
    if not data["verified"]:
        _fail(EXIT_PROTOCOL, "AttestationInvalid",
              "issued credential failed offline verification")
    out = _ensure_out(cfg)
    stem = out / _safe_name(device_id)
    transcript = stem.with_suffix(".transcript")
    credential = stem.with_suffix(".cred")
    ledger = stem.with_suffix(".ledger")
    transcript.write_text("\n".join(data["transcript"]) + "\n", encoding="utf-8")
    credential.write_bytes(bytes.fromhex(data["credential"]))
    ledger.write_bytes(bytes.fromhex(data["ledger"]))
    click.echo(f"registered {device_id}: pk_full {data['pk_full'][:16]}..")
    for path in (transcript, credential, ledger):
        click.echo(f"wrote {path}")


@main.command()
@click.pass_obj
def bench(obj):
    """Run the configured workload sweep; write CSV and SVG reports."""
    cfg = obj["cfg"]
    data = _call(obj["client"], "/bench", {
        "config": cfg.model_dump(),
        "jobs": obj["jobs"],
        "trace": obj["trace"],
    })
    out = _ensure_out(cfg)
    csv_path = out / cfg.output.csv
    svg_path = out / cfg.output.chart
    csv_path.write_text(data["csv"], encoding="utf-8")
    svg_path.write_text(data["svg"], encoding="utf-8")
    click.echo(f"wrote {csv_path} ({len(data['csv'].splitlines()) - 1} rows)")
    click.echo(f"wrote {svg_path}")
    for scenario, lines in sorted(data["events"].items()):
        log_path = out / f"{scenario}.events"
        log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        click.echo(f"wrote {log_path}")


@main.command("verify-ledger")
@click.argument("path", type=click.Path(path_type=Path))
@click.pass_obj
def verify_ledger(obj, path):
    """Exit 0 iff PATH holds an untampered exported chain."""
    try:
        raw = path.read_bytes()
    except OSError as exc:
        _fail(EXIT_CONFIG, "IoFailure", f"cannot read {path}: {exc}")
    data = _call(obj["client"], "/ledger/verify", {"ledger": raw.hex()})
    if not data["ok"]:
        click.echo(f"invalid: chain does not verify ({data['blocks']} blocks parsed)",
                   err=True)
        sys.exit(EXIT_PROTOCOL)
    click.echo(f"ok: {data['blocks']} blocks verified")


@main.group()
def dht():
    """Content-addressed off-chain store."""


def _dht_request(cfg: config_mod.ScenarioConfig, extra: dict) -> dict:
    d = cfg.dht
    return {
        "k": d.k,
        "alpha": d.alpha,
        "nodes": d.nodes,
        "seed": cfg.consortium.seed,
        "stored": _load_dht_state(cfg),
        **extra,
    }


def _dht_state_path(cfg: config_mod.ScenarioConfig) -> Path:
    return Path(cfg.output.dir) / "dht-store.json"


def _load_dht_state(cfg: config_mod.ScenarioConfig) -> dict[str, str]:
    path = _dht_state_path(cfg)
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_CONFIG, "IoFailure", f"cannot read {path}: {exc}")


@dht.command("put")
@click.argument("file", type=click.Path(path_type=Path))
@click.pass_obj
def dht_put(obj, file):
    """Store FILE's bytes; print its content address."""
    cfg = obj["cfg"]
    try:
        raw = file.read_bytes()
    except OSError as exc:
        _fail(EXIT_CONFIG, "IoFailure", f"cannot read {file}: {exc}")
    data = _call(obj["client"], "/dht/put",
                 _dht_request(cfg, {"payload": raw.hex()}))
    _ensure_out(cfg)
    _dht_state_path(cfg).write_text(
        json.dumps(data["stored"], indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(data["address"])


@dht.command("get")
@click.argument("address")
@click.option("--out", "out_file", type=click.Path(path_type=Path), default=None,
              help="Write the payload here instead of stdout.")
@click.pass_obj
def dht_get(obj, address, out_file):
    """Fetch the payload stored at ADDRESS."""
    cfg = obj["cfg"]
    data = _call(obj["client"], "/dht/get", _dht_request(cfg, {"address": address}))
    payload = bytes.fromhex(data["payload"])
    if out_file is not None:
        out_file.write_bytes(payload)
        click.echo(f"wrote {out_file} ({len(payload)} bytes)")
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()


if __name__ == "__main__":
    main()
