from __future__ import annotations

from hiershard.core import MS, SECOND, ProtocolConfig, Scheme
from hiershard.experiment import ExperimentConfig
from hiershard.simnet import FaultSpec
from hiershard.workload import WorkloadConfig


def make_config(zones=4, seed=0, global_ratio=0.2, scheme=Scheme.BALANCED, scheduling=True,
                duration_s=1.5, send_rate=200, accounts=500, faults=(), delta_gst_s=1.0,
                drain_s=4.0, **kw) -> ExperimentConfig:
    proto = ProtocolConfig(delta_gst=int(delta_gst_s * SECOND), scheme=scheme, scheduling=scheduling)
    work_kw = {k: kw.pop(k) for k in ("hot_accounts", "hot_prob", "clients_per_zone", "retry_s") if k in kw}
    work = WorkloadConfig(zones=zones, seed=seed, accounts_per_zone=accounts, global_ratio=global_ratio,
                          send_rate=send_rate, duration_s=duration_s, **work_kw)
    return ExperimentConfig(zones=zones, seed=seed, protocol=proto, workload=work, faults=tuple(faults),
                            drain_s=drain_s, **kw)


def crash(target, start_ms, end_ms=None):
    return FaultSpec(target, "crash", start=start_ms * MS, end=float("inf") if end_ms is None else end_ms * MS)


def withhold(target="F1", start_ms=300):
    return FaultSpec(target, "drop", message_class="REPL", start=start_ms * MS)


def equivocate(target="F1", start_ms=300):
    return FaultSpec(target, "equivocate", phase="vertex", start=start_ms * MS)


def tamper(field, target="F1", start_ms=300):
    return FaultSpec(target, "tamper", field=field, start=start_ms * MS)


def violations(run) -> dict:
    return {k: v[:3] for k, v in run.violations.items() if v}
