"""Experiment configuration, run driver, safety-invariant checks and reports."""

from __future__ import annotations

import dataclasses
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import byzantine, smallbank
from .core import MS, SECOND, ProtocolConfig, Scheme, Topology
from .metrics import (
    ABORTED,
    COMMITTED,
    UNRESOLVED,
    Interference,
    MetricsReport,
    percentiles,
    summarize_processing,
    throughput,
)
from .processing import MainLedger, ProcessResult, process_main_block
from .nodes import Client, Env, FullMember, LocalMember
from .simnet import INF, DelayModel, FaultSpec, Simulator
from .statedb import StateDB
from .workload import WorkloadConfig, generate_schedule, genesis_balances, global_fraction, flatten, workload_digest


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# time-valued config keys are given in milliseconds
_PROTOCOL_MS = {
    "delta_sync_ms": "delta_sync",
    "delta_gst_ms": "delta_gst",
    "max_vertex_delay_ms": "max_vertex_delay",
    "local_block_timeout_ms": "local_block_timeout",
    "prepare_timeout_ms": "prepare_timeout",
}
_PROTOCOL_PLAIN = {
    "max_digests_per_vertex", "local_block_batch_size", "scheme", "scheduling",
    "tx_size_bytes", "local_block_size_bytes",
    "cost_block_overhead", "cost_validate", "cost_execute", "cost_sync_entry",
}
_NETWORK = {"jitter_low_ms", "jitter_high_ms", "async_windows_ms", "drop_in_async"}
_WORKLOAD = {f.name for f in dataclasses.fields(WorkloadConfig)} - {"zones", "seed", "tx_size_bytes"}
_FAULT = {"target", "kind", "message_class", "amount_ms", "field", "phase", "start_ms", "end_ms"}


@dataclass(frozen=True)
class ExperimentConfig:
    zones: int = 3
    f_local: int = 1
    f_full: Optional[int] = None
    seed: int = 0
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    faults: tuple[FaultSpec, ...] = ()
    jitter_low: Optional[int] = None
    jitter_high: Optional[int] = None
    async_windows: tuple[tuple[int, int], ...] = ()
    drop_in_async: bool = False
    drain_s: float = 4.0
    settle_cap_s: float = 20.0
    name: str = ""

    @property
    def end_time(self) -> int:
        return int((self.workload.duration_s + self.drain_s) * SECOND)

    def replace(self, **kw) -> "ExperimentConfig":
        proto = {k: kw.pop(k) for k in list(kw) if k in {f.name for f in dataclasses.fields(ProtocolConfig)}}
        work = {k: kw.pop(k) for k in list(kw) if k in _WORKLOAD}
        cfg = dataclasses.replace(self, **kw)
        if proto:
            cfg = dataclasses.replace(cfg, protocol=dataclasses.replace(cfg.protocol, **proto))
        if work or "seed" in kw or "zones" in kw:
            cfg = dataclasses.replace(cfg, workload=dataclasses.replace(
                cfg.workload, zones=cfg.zones, seed=cfg.seed, **work))
        return cfg

    def as_dict(self) -> dict:
        p = self.protocol
        return {
            "name": self.name,
            "seed": self.seed,
            "topology": {"zones": self.zones, "f_local": self.f_local, "f_full": self.f_full},
            "protocol": {**{f.name: getattr(p, f.name) for f in dataclasses.fields(p) if f.name != "scheme"},
                         "scheme": p.scheme.value},
            "network": {"jitter_low": self.jitter_low, "jitter_high": self.jitter_high,
                        "async_windows": [list(w) for w in self.async_windows], "drop_in_async": self.drop_in_async},
            "workload": dataclasses.asdict(self.workload),
            "faults": [{**dataclasses.asdict(f), "end": None if f.end == INF else f.end} for f in self.faults],
            "drain_s": self.drain_s,
            "settle_cap_s": self.settle_cap_s,
        }


def _check_keys(section: str, got: dict, allowed) -> None:
    unknown = sorted(set(got) - set(allowed))
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from the parsed TOML tree, with descriptive errors."""
    _check_keys("top level", raw, {"name", "seed", "drain_s", "settle_cap_s", "topology", "protocol", "network", "workload", "faults"})
    topo = raw.get("topology", {})
    _check_keys("topology", topo, {"zones", "f_local", "f_full"})
    zones = int(topo.get("zones", 3))
    seed = int(raw.get("seed", 0))
    try:
        Topology.build(zones, int(topo.get("f_local", 1)), topo.get("f_full"))
    except ValueError as exc:
        raise ConfigError(f"[topology]: {exc}") from None

    proto_raw = raw.get("protocol", {})
    _check_keys("protocol", proto_raw, set(_PROTOCOL_MS) | _PROTOCOL_PLAIN)
    kw: dict[str, Any] = {}
    for key, value in proto_raw.items():
        if key in _PROTOCOL_MS:
            kw[_PROTOCOL_MS[key]] = int(round(float(value) * MS))
        else:
            kw[key] = value
    try:
        if "scheme" in kw:
            kw["scheme"] = Scheme(kw["scheme"])
        protocol = ProtocolConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"[protocol]: {exc}") from None

    net = raw.get("network", {})
    _check_keys("network", net, _NETWORK)
    windows = tuple((int(a * MS), int(b * MS)) for a, b in net.get("async_windows_ms", ()))
    for a, b in windows:
        if not 0 <= a < b:
            raise ConfigError(f"[network]: bad async window [{a}, {b})")

    work_raw = raw.get("workload", {})
    _check_keys("workload", work_raw, _WORKLOAD)
    try:
        workload = WorkloadConfig(zones=zones, seed=seed, tx_size_bytes=protocol.tx_size_bytes, **work_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[workload]: {exc}") from None

    faults = []
    for i, f in enumerate(raw.get("faults", ())):
        _check_keys(f"faults[{i}]", f, _FAULT)
        if "target" not in f or "kind" not in f:
            raise ConfigError(f"[faults][{i}]: 'target' and 'kind' are required")
        end = f.get("end_ms")
        try:
            faults.append(FaultSpec(
                target=f["target"], kind=f["kind"], message_class=f.get("message_class"),
                amount=int(round(f.get("amount_ms", 0) * MS)), field=f.get("field"), phase=f.get("phase"),
                start=int(round(f.get("start_ms", 0) * MS)), end=INF if end is None else int(round(end * MS)),
            ))
        except ValueError as exc:
            raise ConfigError(f"[faults][{i}]: {exc}") from None

    def ms(key):
        v = net.get(key)
        return None if v is None else int(round(v * MS))

    cfg = ExperimentConfig(
        zones=zones, f_local=int(topo.get("f_local", 1)), f_full=topo.get("f_full"), seed=seed,
        protocol=protocol, workload=workload, faults=tuple(faults),
        jitter_low=ms("jitter_low_ms"), jitter_high=ms("jitter_high_ms"), async_windows=windows,
        drop_in_async=bool(net.get("drop_in_async", False)), drain_s=float(raw.get("drain_s", 4.0)),
        settle_cap_s=float(raw.get("settle_cap_s", 20.0)),
        name=str(raw.get("name", "")),
    )
    try:
        _delay_model(cfg)
    except ValueError as exc:
        raise ConfigError(f"[network]: {exc}") from None
    return cfg


def config_from_snapshot(d: dict) -> ExperimentConfig:
    """Inverse of ``ExperimentConfig.as_dict`` (used by trace headers)."""
    topo, net = d["topology"], d["network"]
    faults = tuple(FaultSpec(**{**f, "end": INF if f["end"] is None else f["end"]}) for f in d["faults"])
    return ExperimentConfig(
        zones=topo["zones"], f_local=topo["f_local"], f_full=topo["f_full"], seed=d["seed"],
        protocol=ProtocolConfig(**d["protocol"]), workload=WorkloadConfig(**d["workload"]), faults=faults,
        jitter_low=net["jitter_low"], jitter_high=net["jitter_high"],
        async_windows=tuple(tuple(w) for w in net["async_windows"]), drop_in_async=net["drop_in_async"],
        drain_s=d["drain_s"], settle_cap_s=d.get("settle_cap_s", 20.0), name=d["name"],
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def _delay_model(cfg: ExperimentConfig) -> DelayModel:
    return DelayModel(cfg.protocol.delta_sync, cfg.jitter_low, cfg.jitter_high,
                      [tuple(w) for w in cfg.async_windows], cfg.drop_in_async)


# -- running -----------------------------------------------------------------

@dataclass
class Run:
    cfg: ExperimentConfig
    topo: Topology
    sim: Simulator
    env: Env
    schedule: dict
    fulls: dict
    standbys: dict
    locals: dict
    clients: list
    violations: dict = field(default_factory=dict)
    report: Optional[MetricsReport] = None

    def honest_fulls(self) -> list[FullMember]:
        out = [n for n in self.fulls.values() if n.id not in self.env.byzantine]
        out += [n for n in self.standbys.values() if n.serving]
        return out

    def honest_locals(self, zone: Optional[int] = None) -> list[LocalMember]:
        return [n for n in self.locals.values() if n.id not in self.env.byzantine
                and (zone is None or n.zone == zone)]


def build(cfg: ExperimentConfig, trace: bool = False) -> Run:
    topo = Topology.build(cfg.zones, cfg.f_local, cfg.f_full)

    def zone_of(m):
        try:
            return topo.zone_of(m)
        except ValueError:
            return None

    sim = Simulator(cfg.seed, _delay_model(cfg), zone_of=zone_of,
                    is_local_member=lambda m: m.startswith("L"), trace=trace)
    genesis = genesis_balances(cfg.workload)
    env = Env(sim, topo, cfg.protocol, genesis)
    fulls = {z: FullMember(sim, env, topo.full_members[z], z) for z in range(cfg.zones)}
    standbys = {z: FullMember(sim, env, topo.standbys[z], z, active=False) for z in range(cfg.zones)}
    local_nodes = {m: LocalMember(sim, env, m, z) for z in range(cfg.zones) for m in topo.local_members[z]}
    schedule = generate_schedule(cfg.workload)
    retry = int(cfg.workload.retry_s * SECOND)
    clients = [Client(sim, env, f"C{z}.{c}", z, entries, retry) for (z, c), entries in sorted(schedule.items())]
    for spec in cfg.faults:
        if spec.target not in sim.nodes:
            raise ConfigError(f"fault target {spec.target} is not a member")
        sim.inject_fault(spec)
        if spec.kind != "crash":
            env.byzantine.add(spec.target)
        if spec.kind in ("equivocate", "tamper"):
            byzantine.install(sim, env, spec)
    return Run(cfg, topo, sim, env, schedule, fulls, standbys, local_nodes, clients)


SETTLE_STEP = 250 * MS


def settled(run: Run) -> bool:
    """No submission is pending and every committed local block made it to the main chain."""
    if run.env.outcomes.counts()[UNRESOLVED]:
        return False
    if not run.env.main_chain:
        return True
    in_main = set()
    for k in run.env.obs.processed:
        in_main.update((h.zone, h.number, h.digest) for h in _blocks_of(run, k))
    return all((b.zone, b.number, b.hash) in in_main
               for n in run.honest_locals() for b in n.validator.chain)


def run_experiment(cfg: ExperimentConfig, trace_path=None) -> Run:
    run = build(cfg, trace=trace_path is not None)
    _drive(run)
    run.violations = check_invariants(run)
    run.report = make_report(run)
    if trace_path is not None:
        run.sim.write_trace(trace_path, header=json.dumps(cfg.as_dict(), sort_keys=True))
    return run


def _drive(run: Run) -> None:
    cfg = run.cfg
    run.sim.run_until(cfg.end_time)
    # sync-only blocks spawned by late main blocks need their own round trip
    cap = cfg.end_time + int(cfg.settle_cap_s * SECOND)
    while run.sim.now < cap and not settled(run):
        run.sim.run_until(min(cap, run.sim.now + SETTLE_STEP))


@dataclass
class ReplayResult:
    cfg: ExperimentConfig
    lines: int
    matched: bool
    first_divergence: Optional[int]
    expected: Optional[str]
    got: Optional[str]
    run: Run


def read_trace(path) -> tuple[ExperimentConfig, list[str]]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ConfigError(f"{path}: trace has no config header")
    try:
        cfg = config_from_snapshot(json.loads(lines[0][2:]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: unreadable config header: {exc}") from None
    return cfg, lines[1:]


def replay_trace(path) -> ReplayResult:
    """Re-run the recorded config and compare the event trace line by line."""
    cfg, recorded = read_trace(path)
    run = build(cfg, trace=True)
    _drive(run)
    got = run.sim.trace
    first = next((i for i, (a, b) in enumerate(zip(recorded, got)) if a != b), None)
    if first is None and len(recorded) != len(got):
        first = min(len(recorded), len(got))
    run.violations = check_invariants(run)
    run.report = make_report(run)
    pick = lambda seq: seq[first] if first is not None and first < len(seq) else None  # noqa: E731
    return ReplayResult(cfg, len(recorded), first is None, first, pick(recorded), pick(got), run)


def main_blocks(run: Run) -> list:
    """Processed main blocks 1..k of the most advanced honest full member."""
    best = max(run.honest_fulls(), key=lambda n: n.ledger.k if n.ledger is not None else -1)
    recs = best.records
    return [recs[k].block for k in range(1, best.ledger.k + 1)]


def reprocess(run: Run, scheduling: bool) -> list[ProcessResult]:
    """Process the run's fixed main-block sequence again from genesis."""
    ledger = MainLedger(StateDB.genesis(run.env.genesis), run.cfg.zones)
    return [process_main_block(ledger, b, scheduling, run.cfg.protocol) for b in main_blocks(run)]


# -- invariants --------------------------------------------------------------

def _blocks_of(run: Run, k: int):
    for n in run.honest_fulls():
        rec = getattr(n, "records", {}).get(k)
        if rec is not None:
            return rec.block.hdrs
    return ()


def check_invariants(run: Run) -> dict[str, list]:
    env, obs = run.env, run.env.obs
    v: dict[str, list] = {
        "validity": [], "bottom_up": [], "top_down": [], "agreement": [], "equivocation": [],
        "closure": [], "conservation": [], "atomicity": [], "model": [], "latency": [], "processing": [],
    }
    main = env.main_chain
    if main:
        order = defaultdict(list)
        for k in sorted(obs.processed):
            for h in _blocks_of(run, k):
                order[h.zone].append((h.number, h.digest))
        committed = {}
        for n in run.honest_locals():
            for b in n.validator.chain:
                prev = committed.setdefault((b.zone, b.number), b.hash)
                if prev != b.hash:
                    v["bottom_up"].append(f"zone {b.zone} block {b.number}: locals disagree")
        in_main = {(z, num): d for z, seq in order.items() for num, d in seq}
        for (z, num), d in sorted(committed.items()):
            if in_main.get((z, num)) != d:
                v["validity"].append(f"zone {z} block {num} missing from main chain")
        for z, seq in sorted(order.items()):
            nums = [num for num, _ in seq]
            if nums != list(range(1, len(nums) + 1)):
                v["bottom_up"].append(f"zone {z}: main order {nums[:12]}")
        v["top_down"] = [f"{m} k={k} {key}: {a} != {b}" for m, k, key, a, b in obs.topdown_violations]
        seqs = {}
        for n in run.honest_fulls():
            seqs[n.id] = dict(obs.commits.get(n.id, ()))
        ids = sorted(seqs)
        for a in ids:
            for b in ids:
                if a < b:
                    for k in set(seqs[a]) & set(seqs[b]):
                        if seqs[a][k] != seqs[b][k]:
                            v["agreement"].append(f"{a} vs {b} at k={k}")
        honest = {n.id for n in run.honest_fulls()}
        for vid, seen in sorted(obs.includes.items()):
            hashes = {h for m, h in seen if m in honest}
            if len(hashes) > 1:
                v["equivocation"].append(f"vertex {vid} certified twice")
        honest_proc = [m for m, _ in obs.main_value_mismatch if m in honest]
        v["processing"] = [f"{m} diverged in main values" for m in honest_proc]
    out = env.outcomes
    if not out.closes():
        v["closure"] = [f"conflicting outcome for {t}" for t in out.conflicting[:10]]
        extra = set(out.final) - set(out.submitted)
        v["closure"] += [f"outcome for unsubmitted {t}" for t in sorted(extra)[:10]]
    for txid, (status, t, _) in out.final.items():
        sub = out.submitted.get(txid)
        if sub is not None and status == COMMITTED and t < sub.time:
            v["latency"].append(txid)
    v["conservation"] = _conservation(run)
    if not main:
        v["atomicity"] = _atomicity(run)
    if run.sim.model_violations:
        v["model"].append(f"{run.sim.model_violations} cross-zone local sends")
    return v


def _conservation(run: Run) -> list[str]:
    g = run.env.genesis
    initial = sum(val for _, val in g)
    if run.env.main_chain:
        fulls = sorted(run.honest_fulls(), key=lambda n: -n.ledger.k)
        if not fulls or fulls[0].ledger.k == 0:
            return []
        ledger = fulls[0].ledger
        deposits = 0
        byid = {tx.txid: tx for tx in flatten(run.schedule)}
        for k in range(1, ledger.k + 1):
            res = run.env.obs.processed[k]
            deposits += sum(smallbank.deposit_total(byid[t].op) for t in res.committed if t in byid)
        total = sum(ledger.db.values().values())
        if total != initial + deposits:
            return [f"main state total {total} != {initial} + deposits {deposits}"]
        return []
    total, deposits = 0, 0
    for z in range(run.cfg.zones):
        members = run.honest_locals(z)
        if not members:
            continue
        n = members[0]
        total += sum(n.validator.db.values().values())
        for b in n.validator.chain:
            deposits += sum(smallbank.deposit_total(tx.op) for tx in b.txs if tx.is_local)
    # 2PC writes carry their own deltas; a deposit never crosses zones
    if total != initial + deposits:
        return [f"zone state total {total} != {initial} + deposits {deposits}"]
    return []


def _applied_zones(run: Run) -> dict[str, set]:
    applied = defaultdict(set)
    for z in range(run.cfg.zones):
        members = run.honest_locals(z)
        for b in members[0].validator.chain if members else ():
            for ap in b.applies:
                applied[ap.txid].add(z)
    return applied


def _atomicity(run: Run) -> list[str]:
    coord = run.fulls[0].coordinator
    if coord is None:
        return []
    applied = _applied_zones(run)
    bad = []
    for txid, st in sorted(coord.inflight.items()):
        zones = applied.get(txid, set())
        if zones and zones != set(st.zones):
            bad.append(f"{txid} applied in {sorted(zones)} of {list(st.zones)}")
        if zones and st.phase == "abort":
            bad.append(f"{txid} aborted but applied in {sorted(zones)}")
    return bad


# -- report ------------------------------------------------------------------

def _storage(run: Run) -> dict[str, int]:
    out = {}
    for n in list(run.fulls.values()) + list(run.standbys.values()) + list(run.locals.values()):
        out[n.id] = n.storage_bytes()
    return dict(sorted(out.items()))


def make_report(run: Run) -> MetricsReport:
    cfg, env, obs, sim = run.cfg, run.env, run.env.obs, run.sim
    counts = env.outcomes.counts()
    interference = Interference()
    aborted_local = attempted_local = 0
    costs = []
    for k in sorted(obs.processed):
        res = obs.processed[k]
        attempted_local += res.local_count
        costs.append(res.cost)
        for a in res.aborts:
            if a.kind == "local":
                aborted_local += 1
                interference.add(a, k)
    duration = int(cfg.workload.duration_s * SECOND)
    span_s = max(sim.now, 1) / SECOND
    audit = Counter()
    for n in run.locals.values():
        for rec in n.audit.log:
            audit[rec.outcome] += 1
    storage = _storage(run)
    links = {f"{a}->{b}": round(bytes_ / span_s, 3) for (a, b), bytes_ in sorted(sim.link_bytes.items())}
    txs = flatten(run.schedule)
    extra = {
        "global_fraction": round(global_fraction(txs), 6),
        "view_change_times_ms": [vc["time"] / MS for vc in obs.view_changes],
        "view_change_zones": [vc["zone"] for vc in obs.view_changes],
        "evidence": dict(sorted(Counter(e[0] for e in obs.evidence).items())),
        "flagged_proofs": sorted({m for n in run.honest_fulls() if env.main_chain for _, m in n.pool.flagged}),
        "rejects": dict(sorted(Counter(env.outcomes.reasons.values()).items())),
        "local_rejects": dict(sorted(Counter(r for _, _, r in obs.rejects).items())),
        "messages": dict(sorted(sim.kind_count.items())),
        "twopc": _twopc_summary(run),
        "total_bps": round(sum(sim.link_bytes.values()) / span_s, 3),
    }
    return MetricsReport(
        scheme=cfg.protocol.scheme.value,
        scheduling=cfg.protocol.scheduling,
        zones=cfg.zones,
        seed=cfg.seed,
        duration_s=cfg.workload.duration_s,
        submitted=len(env.outcomes.submitted),
        committed=counts[COMMITTED],
        aborted=counts[ABORTED],
        rejected=counts["rejected"],
        unresolved=counts["unresolved"],
        throughput_tps=round(throughput(counts[COMMITTED], duration), 6),
        latency_ms=percentiles(env.outcomes.latencies(COMMITTED)),
        abort_ratio=round(aborted_local / attempted_local, 9) if attempted_local else 0.0,
        aborted_local=aborted_local,
        attempted_local=attempted_local,
        interference=interference.as_dict(),
        mean_processing_ms=summarize_processing(costs),
        main_blocks=len(obs.processed),
        bandwidth_bps=links,
        bandwidth_by_kind={k: round(b / span_s, 3) for k, b in sorted(sim.kind_bytes.items())},
        storage_bytes=storage,
        storage_total=sum(storage.values()),
        view_changes=len(obs.view_changes),
        audit=dict(sorted(audit.items())),
        violations={k: len(vals) for k, vals in sorted(run.violations.items())},
        trace_digest=sim.trace_digest,
        workload_digest=workload_digest(run.schedule),
        extra=extra,
    )


def _twopc_summary(run: Run) -> dict:
    coord = run.fulls[0].coordinator
    if coord is None or run.env.main_chain:
        return {}
    phases = Counter(st.phase for st in coord.inflight.values())
    outcomes = Counter(coord.outcomes.values())
    return {"inflight": dict(sorted(phases.items())), "outcomes": dict(sorted(outcomes.items()))}


def report_json(report: MetricsReport) -> str:
    return json.dumps(report.as_dict(), sort_keys=True, separators=(",", ":"))


# -- comparison --------------------------------------------------------------

COMPARED = ("throughput_tps", "abort_ratio", "storage_total", "mean_processing_ms")


class CompareError(ValueError):
    """Reports are not from the same workload trace."""


def compare_reports(a: dict, b: dict) -> dict:
    """Ratio table b/a for the headline metrics, with direction flags."""
    if a.get("workload_digest") != b.get("workload_digest"):
        raise CompareError("reports come from different workload traces")
    rows = {}
    for key in COMPARED:
        x, y = a.get(key), b.get(key)
        if x is None or y is None:
            rows[key] = {"a": x, "b": y, "ratio": None, "direction": "n/a"}
            continue
        if x == y:
            ratio = 1.0
        elif x == 0:
            ratio = float("inf")
        else:
            ratio = y / x
        direction = "=" if ratio == 1.0 else (">" if ratio > 1.0 else "<")
        rows[key] = {"a": x, "b": y, "ratio": ratio, "direction": direction}
    return {"a": _label(a), "b": _label(b), "rows": rows}


def _label(r: dict) -> str:
    sched = "sched" if r.get("scheduling") else "nosched"
    return f"{r.get('scheme')}/{sched}/Z{r.get('zones')}/seed{r.get('seed')}"
