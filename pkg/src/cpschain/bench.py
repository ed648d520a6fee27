"""Workload benchmarks: trend-level reproduction of the evaluation setup.

A scenario drives the full transaction pipeline — device enrollment,
proposal, endorsement collection, ordering/batching, commit, off-chain
store for writes, and the direct peer query path for reads — through a
deterministic single-server queueing model. Stage costs are charged in
ticks (1 tick = 1 ms by default) using the cost model below instead of
re-running the cryptography per transaction; the protocol modules carry
their own correctness tests, while this module answers throughput,
latency, and success-rate questions at rates where executing real
pairings per transaction would be pointless overhead.

Reported numbers are directions and orderings, not hardware
measurements; every artifact carries that disclaimer.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import random
import statistics

from dataclasses import dataclass, field, replace

from .errors import ConfigInvalid, EmptyReport, IoFailure
from .ordering import CFT, PBFT, ConsensusConfig

AUTH_MS = "MS"
AUTH_CERT = "CertBaseline"

CSV_HEADER = (
    "scenario,op,peers,rate,submitted,committed,success_rate,tp,"
    "lat_avg_ms,lat_p50_ms,lat_p95_ms"
)
FOOTER_DISCLAIMER = (
    "Simulated trends: directions and orderings are meaningful; "
    "absolute magnitudes are model artifacts, not hardware measurements."
)


@dataclass(frozen=True)
class CostModel:
    """Stage costs in ticks (default 1 tick = 1 ms)."""

    latency_band: tuple[int, int] = (1, 3)  # one-way link latency
    endorse_sign: int = 2  # peer simulates + signs a response
    endorse_verify: int = 1  # device verifies one endorsement signature
    consensus_sig: int = 2  # quorum certificate aggregation per block
    per_tx_validate: int = 3  # MVCC check + stamping per transaction
    dht_store: int = 2  # replicating the payload after commit
    read_query: int = 2  # peer-local state read
    ms_share: int = 1  # verifying one partial-secret share
    attest_verify: int = 2  # verifying a bundle attestation
    cert_chain_verify: int = 2  # walking a certificate chain
    ca_band: tuple[int, int] = (40, 242)  # CA round trip for CertBaseline
    tick_ms: float = 1.0
    drain_grace: int = 2_000  # post-workload ticks allowed for draining


@dataclass(frozen=True)
class WorkloadSpec:
    target_rate: int
    duration: int  # simulated seconds
    mix: float = 0.5  # read fraction
    device_count: int = 8
    peer_count: int = 4
    consensus: ConsensusConfig = field(
        default_factory=lambda: ConsensusConfig(mode=PBFT, n=3, f=0, queue_limit=256)
    )
    auth_mode: str = AUTH_MS
    seed: int = 0

    def __post_init__(self):
        if self.target_rate < 1:
            raise ConfigInvalid("target_rate must be positive", "workload.target_rate")
        if self.duration < 1:
            raise ConfigInvalid("duration must be at least one second", "workload.duration")
        if not 0.0 <= self.mix <= 1.0:
            raise ConfigInvalid("read fraction must lie in [0, 1]", "workload.mix")
        if self.device_count < 1:
            raise ConfigInvalid("device_count must be positive", "workload.device_count")
        if self.peer_count < 1:
            raise ConfigInvalid("peer_count must be positive", "workload.peer_count")
        if self.auth_mode not in (AUTH_MS, AUTH_CERT):
            raise ConfigInvalid(
                f"auth_mode must be {AUTH_MS!r} or {AUTH_CERT!r}", "workload.auth_mode"
            )

    @property
    def scenario_id(self) -> str:
        return (
            f"{self.consensus.mode}-{self.peer_count}p-{self.target_rate}tps-"
            f"{self.auth_mode}-s{self.seed}"
        )


@dataclass(frozen=True)
class Metrics:
    submitted: int = 0
    committed: int = 0
    success_rate: float = 0.0
    throughput: float = 0.0
    latency_avg_ms: float = 0.0
    latency_p50_ms: float = 0.0
    latency_p95_ms: float = 0.0


@dataclass(frozen=True)
class Row:
    scenario: str
    op: str  # READ or WRITE
    peers: int
    rate: int
    metrics: Metrics


@dataclass
class BenchmarkReport:
    rows: list[Row] = field(default_factory=list)
    specs: dict[str, WorkloadSpec] = field(default_factory=dict)
    events: dict[str, list[str]] = field(default_factory=dict)
    accounting: dict[str, dict[str, int]] = field(default_factory=dict)
    footer: str = FOOTER_DISCLAIMER

    def log_ref(self, scenario: str) -> str:
        return f"{scenario}.events"


def _nearest_rank(sorted_values, pct: int):
    """Nearest-rank percentile: the ceil(N*pct/100)-th smallest value,
    computed in integers so no float rounding can shift the rank."""
    if not sorted_values:
        return 0
    rank = max(1, -(-len(sorted_values) * pct // 100))
    return sorted_values[rank - 1]


def _parse_event(entry):
    if isinstance(entry, str):
        tick, event, tx_id, node = entry.split(",")
        return int(tick), event, tx_id, node
    return entry


def compute_metrics(events, duration: int, tick_ms: float = 1.0) -> Metrics:
    """Pair submit/commit events by transaction id and apply the metric
    formulas; unknown event kinds are ignored."""
    submits: dict[str, int] = {}
    commits: dict[str, int] = {}
    for entry in events:
        tick, event, tx_id, _ = _parse_event(entry)
        if event == "submit":
            submits[tx_id] = tick
        elif event == "commit":
            commits[tx_id] = tick
    submitted = len(submits)
    lats = sorted(
        commits[tx] - submits[tx] for tx in commits.keys() & submits.keys()
    )
    committed = len(lats)
    if not submitted:
        return Metrics()
    return Metrics(
        submitted=submitted,
        committed=committed,
        success_rate=round(committed / submitted, 6),
        throughput=round(committed / duration, 3) if duration else 0.0,
        latency_avg_ms=round(statistics.mean(lats) * tick_ms, 3) if lats else 0.0,
        latency_p50_ms=round(_nearest_rank(lats, 50) * tick_ms, 3),
        latency_p95_ms=round(_nearest_rank(lats, 95) * tick_ms, 3),
    )


def _fold_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"bench:{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _endorse_threshold(n: int) -> int:
    return -(-2 * n // 3)


def _registration_ticks(rng: random.Random, spec: WorkloadSpec, cost: CostModel) -> int:
    """Enrollment latency under the scenario's auth mode."""
    lo, hi = cost.latency_band
    base = rng.randint(lo, hi) + rng.randint(lo, hi)
    if spec.auth_mode == AUTH_MS:
        t = _endorse_threshold(spec.peer_count)
        return base + t * cost.ms_share + cost.attest_verify
    ca_lo, ca_hi = cost.ca_band
    extra = rng.randint(ca_lo, ca_hi) if ca_hi > 0 else 0
    return base + cost.cert_chain_verify + extra


def run_scenario(spec: WorkloadSpec, cost: CostModel = CostModel()) -> BenchmarkReport:
    """Deterministic per seed: enrollment, then `target_rate` tx/s for
    `duration` seconds through endorsement → ordering → commit (+ DHT
    store) for writes and the peer query path for reads."""
    rng = random.Random(_fold_seed(spec.seed, spec.scenario_id))
    lo, hi = cost.latency_band
    cfg = spec.consensus
    t_e = _endorse_threshold(spec.peer_count)
    horizon = spec.duration * 1000 + cost.drain_grace
    events: list[tuple[int, str, str, str]] = []

    for d in range(spec.device_count):
        submit = d * 5
        done = submit + _registration_ticks(rng, spec, cost)
        events.append((submit, "reg-submit", f"g{d:04d}", f"d{d}"))
        events.append((done, "reg-done", f"g{d:04d}", f"d{d}"))

    total = spec.target_rate * spec.duration
    write_arrivals: list[tuple[int, str]] = []  # (endorsed_tick, tx_id)
    reads_so_far = 0
    for i in range(total):
        tick = i * 1000 // spec.target_rate
        device = f"d{rng.randrange(spec.device_count)}"
        # deterministic largest-remainder split keeps the op mix exact
        if reads_so_far < spec.mix * (i + 1):
            reads_so_far += 1
            tx_id = f"r{i:06d}"
            events.append((tick, "submit", tx_id, device))
            done = tick + rng.randint(lo, hi) + rng.randint(lo, hi) + cost.read_query
            events.append((done, "commit", tx_id, "p0"))
        else:
            tx_id = f"w{i:06d}"
            events.append((tick, "submit", tx_id, device))
            endorsed = (
                tick
                + rng.randint(lo, hi)
                + rng.randint(lo, hi)
                + cost.endorse_sign
                + t_e * cost.endorse_verify
            )
            write_arrivals.append((endorsed, tx_id))

    # Single ordering pipeline: one agreement instance at a time; a batch
    # is cut when full or when its oldest envelope ages past the timeout,
    # and never before the previous instance finished.
    write_arrivals.sort()
    phases = 3 if cfg.mode == PBFT else 2
    queue: list[tuple[int, str]] = []
    failed = 0
    inflight = 0
    server_free = 0
    i = 0
    now = 0
    while i < len(write_arrivals) or queue:
        if not queue:
            now = max(now, write_arrivals[i][0])
        else:
            if len(queue) >= cfg.batch_size:
                act = max(server_free, now)
            else:
                act = max(server_free, queue[0][0] + cfg.batch_timeout)
            if i < len(write_arrivals) and write_arrivals[i][0] <= act:
                now = max(now, write_arrivals[i][0])
            else:
                # no arrival interrupts: cut the batch at `act`
                now = act
                batch, queue = queue[: cfg.batch_size], queue[cfg.batch_size :]
                round_trip = sum(rng.randint(lo, hi) for _ in range(2 * phases))
                done = (
                    now + round_trip + cost.consensus_sig
                    + len(batch) * cost.per_tx_validate
                )
                server_free = done
                for _, tx_id in batch:
                    commit_tick = done + cost.dht_store
                    if commit_tick <= horizon:
                        events.append((commit_tick, "commit", tx_id, "o0"))
                    else:
                        inflight += 1
                continue
        while i < len(write_arrivals) and write_arrivals[i][0] <= now:
            if len(queue) >= cfg.queue_limit:
                failed += 1
                events.append((write_arrivals[i][0], "fail", write_arrivals[i][1], "o0"))
            else:
                queue.append(write_arrivals[i])
            i += 1

    events.sort(key=lambda e: (e[0], e[2], e[1]))
    lines = [f"{t},{ev},{tx},{node}" for t, ev, tx, node in events]

    report = BenchmarkReport()
    sid = spec.scenario_id
    report.specs[sid] = spec
    report.events[sid] = lines
    tallies = {"submitted": 0, "committed": 0, "failed": failed, "inflight": inflight}
    for op, prefix in (("READ", "r"), ("WRITE", "w")):
        op_events = [e for e in events if e[2].startswith(prefix)]
        if not any(e[1] == "submit" for e in op_events):
            continue
        metrics = compute_metrics(op_events, spec.duration, cost.tick_ms)
        tallies["submitted"] += metrics.submitted
        tallies["committed"] += metrics.committed
        report.rows.append(
            Row(sid, op, spec.peer_count, spec.target_rate, metrics)
        )
    report.accounting[sid] = tallies
    assert (
        tallies["submitted"]
        == tallies["committed"] + tallies["failed"] + tallies["inflight"]
    ), "event accounting must balance exactly"
    return report


def merge_reports(reports) -> BenchmarkReport:
    merged = BenchmarkReport()
    for rep in reports:
        merged.rows.extend(rep.rows)
        merged.specs.update(rep.specs)
        merged.events.update(rep.events)
        merged.accounting.update(rep.accounting)
    return merged


def run_sweep(specs, jobs: int = 1, cost: CostModel = CostModel()) -> BenchmarkReport:
    """Scenarios share nothing; above one job they fan out to processes."""
    specs = list(specs)
    if jobs <= 1 or len(specs) <= 1:
        return merge_reports(run_scenario(s, cost) for s in specs)
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return merge_reports(pool.map(run_scenario, specs, [cost] * len(specs)))


# --- auth-mode comparison ---------------------------------------------------------------


@dataclass(frozen=True)
class AuthComparison:
    ms: Metrics
    baseline: Metrics
    ratio: float  # baseline mean latency / MS mean latency
    events: dict[str, list[str]]


def compare_auth_modes(
    base_spec: WorkloadSpec,
    cost: CostModel = CostModel(),
    ca_band: tuple[int, int] | None = None,
) -> AuthComparison:
    """Register `device_count` devices under both auth modes with shared
    link-latency draws, so only the mode-specific costs differ."""
    if ca_band is not None:
        cost = replace(cost, ca_band=ca_band)
    rng = random.Random(_fold_seed(base_spec.seed, "auth-comparison"))
    lo, hi = cost.latency_band
    t = _endorse_threshold(base_spec.peer_count)
    logs: dict[str, list[str]] = {AUTH_MS: [], AUTH_CERT: []}
    ca_lo, ca_hi = cost.ca_band
    for d in range(base_spec.device_count):
        submit = d * 5
        base = rng.randint(lo, hi) + rng.randint(lo, hi)
        ms_done = submit + base + t * cost.ms_share + cost.attest_verify
        ca_extra = rng.randint(ca_lo, ca_hi) if ca_hi > 0 else 0
        cert_done = submit + base + cost.cert_chain_verify + ca_extra
        for mode, done in ((AUTH_MS, ms_done), (AUTH_CERT, cert_done)):
            logs[mode].append(f"{submit},submit,g{d:04d},d{d}")
            logs[mode].append(f"{done},commit,g{d:04d},registrar")
    duration = max(1, (base_spec.device_count * 5) // 1000)
    ms_metrics = compute_metrics(logs[AUTH_MS], duration, cost.tick_ms)
    cert_metrics = compute_metrics(logs[AUTH_CERT], duration, cost.tick_ms)
    ratio = (
        round(cert_metrics.latency_avg_ms / ms_metrics.latency_avg_ms, 3)
        if ms_metrics.latency_avg_ms
        else 0.0
    )
    return AuthComparison(ms_metrics, cert_metrics, ratio, logs)


# --- CSV ---------------------------------------------------------------------------------


def _format_row(row: Row) -> str:
    m = row.metrics
    return (
        f"{row.scenario},{row.op},{row.peers},{row.rate},{m.submitted},{m.committed},"
        f"{m.success_rate:.6f},{m.throughput:.3f},{m.latency_avg_ms:.3f},"
        f"{m.latency_p50_ms:.3f},{m.latency_p95_ms:.3f}"
    )


def csv_text(report: BenchmarkReport) -> str:
    return "\n".join([CSV_HEADER, *(_format_row(r) for r in report.rows)]) + "\n"


def export_csv(report: BenchmarkReport, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(csv_text(report))
    except OSError as exc:
        raise IoFailure(f"cannot write CSV to {path}: {exc}") from exc


def load_csv(path) -> list[Row]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read CSV from {path}: {exc}") from exc
    if not lines or lines[0] != CSV_HEADER:
        raise IoFailure(f"unrecognized CSV header in {path}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(
            Row(
                scenario=parts[0],
                op=parts[1],
                peers=int(parts[2]),
                rate=int(parts[3]),
                metrics=Metrics(
                    submitted=int(parts[4]),
                    committed=int(parts[5]),
                    success_rate=float(parts[6]),
                    throughput=float(parts[7]),
                    latency_avg_ms=float(parts[8]),
                    latency_p50_ms=float(parts[9]),
                    latency_p95_ms=float(parts[10]),
                ),
            )
        )
    return rows


def export_event_log(report: BenchmarkReport, scenario: str, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(report.events[scenario]) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write event log to {path}: {exc}") from exc


# --- SVG chart ---------------------------------------------------------------------------

CHART_W = 960
CHART_H = 460
PANEL_W = 380
PANEL_H = 300
PANEL_X = (70, 540)
PANEL_Y = 70
OP_COLORS = {"READ": "#1f77b4", "WRITE": "#d62728"}


def scale(value: float, lo: float, hi: float, px0: float, px1: float) -> float:
    """The linear axis transform used by render_chart (exposed so tests
    can map SVG coordinates back to data values)."""
    if hi == lo:
        return (px0 + px1) / 2
    return px0 + (value - lo) / (hi - lo) * (px1 - px0)


def chart_domain(report: BenchmarkReport):
    """(x-field name, x range, y range per panel) for the current rows."""
    rates = sorted({r.rate for r in report.rows})
    peers = sorted({r.peers for r in report.rows})
    if len(rates) > 1:
        x_field, xs = "rate", rates
    else:
        x_field, xs = "peers", peers
    x_lo, x_hi = xs[0], xs[-1]
    tp_hi = max((r.metrics.throughput for r in report.rows), default=0) or 1
    lat_hi = max((r.metrics.latency_avg_ms for r in report.rows), default=0) or 1
    return x_field, (x_lo, x_hi), (0.0, tp_hi * 1.05), (0.0, lat_hi * 1.05)


def _panel(x0, title, y_label, x_label, series, x_range, y_range):
    parts = [
        f'<rect x="{x0}" y="{PANEL_Y}" width="{PANEL_W}" height="{PANEL_H}" '
        'fill="none" stroke="#444" stroke-width="1"/>',
        f'<text x="{x0 + PANEL_W / 2}" y="{PANEL_Y - 14}" text-anchor="middle" '
        f'font-size="15">{title}</text>',
        f'<text x="{x0 + PANEL_W / 2}" y="{PANEL_Y + PANEL_H + 38}" '
        f'text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="{x0 - 48}" y="{PANEL_Y + PANEL_H / 2}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 {x0 - 48} {PANEL_Y + PANEL_H / 2})">'
        f"{y_label}</text>",
    ]
    for i in range(5):
        frac = i / 4
        y_val = y_range[0] + frac * (y_range[1] - y_range[0])
        py = scale(y_val, y_range[0], y_range[1], PANEL_Y + PANEL_H, PANEL_Y)
        parts.append(
            f'<line x1="{x0}" y1="{py:.1f}" x2="{x0 + PANEL_W}" y2="{py:.1f}" '
            'stroke="#ddd" stroke-width="0.5"/>'
        )
        parts.append(
            f'<text x="{x0 - 6}" y="{py + 4:.1f}" text-anchor="end" font-size="10">'
            f"{y_val:.1f}</text>"
        )
    xs_done = set()
    for op, points in series.items():
        if not points:
            continue
        coords = []
        for x_val, y_val in points:
            px = scale(x_val, x_range[0], x_range[1], x0 + 20, x0 + PANEL_W - 20)
            py = scale(y_val, y_range[0], y_range[1], PANEL_Y + PANEL_H, PANEL_Y)
            coords.append((px, py))
            if x_val not in xs_done:
                xs_done.add(x_val)
                parts.append(
                    f'<text x="{px:.1f}" y="{PANEL_Y + PANEL_H + 16}" '
                    f'text-anchor="middle" font-size="10">{x_val}</text>'
                )
        pts = " ".join(f"{px:.2f},{py:.2f}" for px, py in coords)
        color = OP_COLORS.get(op, "#555")
        parts.append(
            f'<polyline class="{op}" fill="none" stroke="{color}" '
            f'stroke-width="2" points="{pts}"/>'
        )
        for px, py in coords:
            parts.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}"/>'
            )
    return parts


def render_chart(report: BenchmarkReport) -> str:
    """Pure-text SVG 1.1: throughput and mean-latency panels with one
    polyline per operation series."""
    if not report.rows:
        raise EmptyReport("no rows to chart")
    x_field, x_range, tp_range, lat_range = chart_domain(report)
    x_label = "target rate (tx/s)" if x_field == "rate" else "peer count"

    def series(metric):
        by_op: dict[str, list[tuple[int, float]]] = {}
        for row in sorted(report.rows, key=lambda r: (r.op, getattr(r, x_field))):
            by_op.setdefault(row.op, []).append(
                (getattr(row, x_field), metric(row.metrics))
            )
        return by_op

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{CHART_W}" height="{CHART_H}" viewBox="0 0 {CHART_W} {CHART_H}">',
        f'<text x="{CHART_W / 2}" y="28" text-anchor="middle" font-size="17">'
        "Transaction performance by operation</text>",
    ]
    parts += _panel(
        PANEL_X[0], "Throughput", "committed tx/s", x_label,
        series(lambda m: m.throughput), x_range, tp_range,
    )
    parts += _panel(
        PANEL_X[1], "Mean latency", "latency (ms)", x_label,
        series(lambda m: m.latency_avg_ms), x_range, lat_range,
    )
    legend_x = PANEL_X[0]
    for i, (op, color) in enumerate(OP_COLORS.items()):
        lx = legend_x + i * 110
        parts.append(
            f'<rect x="{lx}" y="40" width="12" height="12" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{lx + 18}" y="50" font-size="12">{op}</text>'
        )
    parts.append(
        f'<text x="{CHART_W / 2}" y="{CHART_H - 12}" text-anchor="middle" '
        f'font-size="11" fill="#666">{report.footer}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)
