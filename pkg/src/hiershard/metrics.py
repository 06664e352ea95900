"""Transaction outcome ledger and run metrics."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import SECOND

COMMITTED = "committed"
ABORTED = "aborted"
REJECTED = "rejected"
UNRESOLVED = "unresolved"


@dataclass
class Submission:
    txid: str
    zone: int
    time: int
    is_global: bool


class OutcomeLedger:
    """One final outcome per submitted txid.

    Main-chain outcomes become final once ``threshold`` distinct local members
    of the submitting zone report the same status, so up to ``threshold - 1``
    lying members cannot fake a commit.
    """

    def __init__(self, threshold: int) -> None:
        self.threshold = threshold
        self.submitted: dict[str, Submission] = {}
        self.final: dict[str, tuple[str, int, int]] = {}  # txid -> (status, time, k)
        self.reasons: dict[str, str] = {}
        self._reports: dict[str, dict[str, set]] = defaultdict(lambda: defaultdict(set))
        self.conflicting: list[str] = []

    def submit(self, txid: str, zone: int, t: int, is_global: bool) -> None:
        if txid in self.submitted:
            raise ValueError(f"duplicate submission {txid}")
        self.submitted[txid] = Submission(txid, zone, t, is_global)

    def reject(self, txid: str, reason: str, t: int) -> None:
        self._finalize(txid, REJECTED, t, 0)
        self.reasons[txid] = reason

    def confirm(self, member: str, txid: str, status: str, k: int, t: int) -> None:
        reports = self._reports[txid]
        reports[status].add(member)
        if len(reports) > 1 and txid not in self.conflicting:
            self.conflicting.append(txid)
        if len(reports[status]) >= self.threshold:
            self._finalize(txid, status, t, k)

    def finalize(self, txid: str, status: str, t: int, k: int = 0) -> None:
        self._finalize(txid, status, t, k)

    def _finalize(self, txid: str, status: str, t: int, k: int) -> None:
        prev = self.final.get(txid)
        if prev is not None:
            if prev[0] != status and txid not in self.conflicting:
                self.conflicting.append(txid)
            return
        self.final[txid] = (status, t, k)

    def status(self, txid: str) -> str:
        f = self.final.get(txid)
        return f[0] if f else UNRESOLVED

    def counts(self) -> Counter:
        c = Counter()
        for txid in self.submitted:
            c[self.status(txid)] += 1
        return c

    def latencies(self, status: str = COMMITTED) -> np.ndarray:
        out = [self.final[t][1] - s.time for t, s in self.submitted.items()
               if t in self.final and self.final[t][0] == status]
        return np.asarray(out, dtype=np.int64)

    def closes(self) -> bool:
        """Every submission has exactly one recorded outcome and nothing else does."""
        return set(self.final) <= set(self.submitted) and not self.conflicting


@dataclass
class Interference:
    same_block_global: int = 0
    cross_block_global: int = 0
    local_cascade: int = 0

    def add(self, abort, k: int) -> None:
        kinds = [(o.kind, o.main_block) for _, o in abort.conflicts]
        if any(kd == "global" and mb == k for kd, mb in kinds):
            self.same_block_global += 1
        elif any(kd == "global" for kd, _ in kinds):
            self.cross_block_global += 1
        else:
            self.local_cascade += 1

    def as_dict(self) -> dict:
        return {
            "same_block_global": self.same_block_global,
            "cross_block_global": self.cross_block_global,
            "local_cascade": self.local_cascade,
        }


def percentiles(values: np.ndarray, qs=(50, 90, 99)) -> dict:
    if values.size == 0:
        return {f"p{q}": None for q in qs} | {"mean": None}
    out = {f"p{q}": float(np.percentile(values, q)) / 1000.0 for q in qs}
    out["mean"] = float(values.mean()) / 1000.0
    return out


@dataclass
class MetricsReport:
    scheme: str
    scheduling: bool
    zones: int
    seed: int
    duration_s: float
    submitted: int
    committed: int
    aborted: int
    rejected: int
    unresolved: int
    throughput_tps: float
    latency_ms: dict
    abort_ratio: float
    aborted_local: int
    attempted_local: int
    interference: dict
    mean_processing_ms: Optional[float]
    main_blocks: int
    bandwidth_bps: dict
    bandwidth_by_kind: dict
    storage_bytes: dict
    storage_total: int
    view_changes: int
    audit: dict
    violations: dict
    trace_digest: str
    workload_digest: str
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())


def summarize_processing(costs) -> Optional[float]:
    if not costs:
        return None
    return float(np.mean(np.asarray(costs, dtype=np.float64))) / 1000.0


def throughput(committed: int, duration_us: int) -> float:
    if duration_us <= 0:
        return 0.0
    return committed / (duration_us / SECOND)
