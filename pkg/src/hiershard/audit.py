"""Audit budgets, the pending-block list, and view-change bookkeeping kept
by local members about their zone's full member."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .core import Signature, subject

AVAIL = "avail"
PROC = "proc"

VIEWCHANGE = "viewchange"


@dataclass(frozen=True)
class AuditConfig:
    delta_sync: int
    delta_gst: int

    @property
    def avail(self) -> int:
        return 3 * self.delta_sync

    @property
    def inclusion(self) -> int:
        return 3 * self.delta_sync

    @property
    def consensus(self) -> int:
        return 4 * self.delta_sync

    @property
    def proc_cert(self) -> int:
        return 2 * self.delta_sync

    @property
    def proc(self) -> int:
        """Timer started at AVAIL receipt: consensus plus processing certificate."""
        return self.consensus + self.proc_cert

    @property
    def end_to_end(self) -> int:
        return self.avail + self.consensus + self.proc_cert

    def budget(self, phase: str) -> int:
        if phase == AVAIL:
            return self.avail
        if phase == PROC:
            return self.proc
        raise ValueError(f"unknown phase {phase!r}")


@dataclass
class PendingEntry:
    number: int
    phase: str
    deadline: int
    gst_deadline: Optional[int] = None

    @property
    def waiting_gst(self) -> bool:
        return self.gst_deadline is not None


@dataclass
class AuditRecord:
    member: str
    block: int
    phase: str
    deadline: int
    outcome: str  # ok | gst-wait | fault
    time: int

    def as_dict(self) -> dict:
        return {
            "member": self.member, "block": self.block, "phase": self.phase,
            "deadline": self.deadline, "outcome": self.outcome, "time": self.time,
        }


class AuditTracker:
    """Per-local-member phase timers. The owning node drives real timers and
    calls back into this object; the tracker itself is clock-free."""

    def __init__(self, member: str, cfg: AuditConfig) -> None:
        self.member = member
        self.cfg = cfg
        self.timers: dict[int, PendingEntry] = {}
        self.pending: dict[int, PendingEntry] = {}
        self.log: list[AuditRecord] = []
        self.faulted = False

    def start(self, number: int, phase: str, now: int) -> PendingEntry:
        entry = PendingEntry(number, phase, now + self.cfg.budget(phase))
        self.timers[number] = entry
        self.pending.pop(number, None)
        return entry

    def satisfy(self, number: int, phase: str, now: int) -> bool:
        """Certificate for ``phase`` of block ``number`` arrived."""
        entry = self.timers.get(number) or self.pending.get(number)
        if entry is None or entry.phase != phase:
            return False
        self.timers.pop(number, None)
        was_pending = self.pending.pop(number, None) is not None
        self.log.append(AuditRecord(self.member, number, phase, entry.deadline, "ok", now))
        if was_pending:
            entry.gst_deadline = None
        return True

    def clear(self, number: int) -> None:
        self.timers.pop(number, None)
        self.pending.pop(number, None)

    def expire(self, number: int, phase: str, now: int) -> Optional[PendingEntry]:
        """Phase deadline passed: move to the pending list with a GST deadline."""
        entry = self.timers.get(number)
        if entry is None or entry.phase != phase or entry.deadline > now:
            return None
        del self.timers[number]
        entry.gst_deadline = now + self.cfg.delta_gst
        self.pending[number] = entry
        self.log.append(AuditRecord(self.member, number, phase, entry.deadline, "gst-wait", now))
        return entry

    def gst_expired(self, number: int, now: int) -> bool:
        entry = self.pending.get(number)
        return entry is not None and entry.gst_deadline is not None and entry.gst_deadline <= now

    def conclude_fault(self, number: int, phase: str, now: int) -> bool:
        """Record the fault conclusion; True only the first time (one view change)."""
        self.log.append(AuditRecord(self.member, number, phase, now, "fault", now))
        if self.faulted:
            return False
        self.faulted = True
        return True

    def reset_for_new_view(self, now: int) -> list[PendingEntry]:
        """Re-arm every outstanding entry against the new full member."""
        self.faulted = False
        entries = sorted(list(self.timers.values()) + list(self.pending.values()), key=lambda e: e.number)
        self.timers.clear()
        self.pending.clear()
        out = []
        for e in entries:
            out.append(self.start(e.number, e.phase, now))
        return out


def viewchange_subject(zone: int, view: int) -> bytes:
    return subject(VIEWCHANGE, zone, view)


@dataclass
class ViewChangeCollector:
    """Standby side: gathers fault conclusions for a zone's current view."""

    zone: int
    quorum: int
    view: int = 0
    votes: dict = field(default_factory=dict)

    def add(self, view: int, sig: Signature, registry, population) -> bool:
        """True when this addition completes the quorum."""
        if view != self.view or sig.member not in population:
            return False
        if not registry.verify(sig, viewchange_subject(self.zone, view)):
            return False
        before = len(self.votes)
        self.votes.setdefault(sig.member, sig)
        return before < self.quorum <= len(self.votes)


def deposition_deadline(cfg: AuditConfig, phase: str, view_change_time: int) -> int:
    """Upper bound on time from block commit to deposition of a withholding member."""
    budget = cfg.avail if phase == AVAIL else cfg.avail + cfg.proc
    return budget + cfg.delta_gst + view_change_time
