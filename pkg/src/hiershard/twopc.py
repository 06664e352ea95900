"""Coordinator-driven two-phase commit for the performance-sharding baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import smallbank
from .core import Transaction, Version, ownership, subject

DECIDE = "2pc-decide"


def decision_subject(txid: str, commit: bool, writes) -> bytes:
    return subject(DECIDE, txid, commit, tuple(writes))


class LockTable:
    """Per-key fail-fast locks held by prepared transactions of one zone."""

    def __init__(self) -> None:
        self._owner: dict[str, str] = {}
        self._held: dict[str, tuple[str, ...]] = {}

    def try_lock(self, txid: str, keys) -> bool:
        keys = tuple(keys)
        if txid in self._held:
            return True
        if any(k in self._owner for k in keys):
            return False
        for k in keys:
            self._owner[k] = txid
        self._held[txid] = keys
        return True

    def release(self, txid: str) -> None:
        for k in self._held.pop(txid, ()):
            if self._owner.get(k) == txid:
                del self._owner[k]

    def is_locked(self, key: str) -> bool:
        return key in self._owner

    def holder(self, key: str) -> Optional[str]:
        return self._owner.get(key)

    def holds(self, txid: str) -> bool:
        return txid in self._held

    def __len__(self) -> int:
        return len(self._held)


@dataclass
class InFlight:
    tx: Transaction
    zones: tuple[int, ...]
    phase: str = "prepare"  # prepare | commit | abort | done
    votes: dict = field(default_factory=dict)  # zone -> (ok, reads)
    writes: dict = field(default_factory=dict)  # zone -> tuple[(key, value)]
    acks: set = field(default_factory=set)
    started: int = 0

    @property
    def decided(self) -> bool:
        return self.phase in ("commit", "abort", "done")


def involved_zones(tx: Transaction) -> tuple[int, ...]:
    return tuple(sorted({ownership(k) for k in tx.keys()}))


class TwoPCState:
    """Coordinator bookkeeping; message handling lives in the node."""

    def __init__(self) -> None:
        self.inflight: dict[str, InFlight] = {}
        self.outcomes: dict[str, str] = {}

    def begin(self, tx: Transaction, now: int) -> InFlight:
        if tx.txid in self.inflight:
            return self.inflight[tx.txid]
        st = InFlight(tx, involved_zones(tx), started=now)
        self.inflight[tx.txid] = st
        return st

    def vote(self, txid: str, zone: int, ok: bool, reads) -> Optional[str]:
        """Record a vote. Returns the decision once it can be made."""
        st = self.inflight.get(txid)
        if st is None or st.decided or zone not in st.zones:
            return None
        st.votes[zone] = (ok, dict(reads))
        if not ok:
            return self._decide(st, False)
        if len(st.votes) == len(st.zones):
            return self._decide(st, True)
        return None

    def timeout(self, txid: str) -> Optional[str]:
        st = self.inflight.get(txid)
        if st is None or st.decided:
            return None
        return self._decide(st, False)

    def _decide(self, st: InFlight, all_yes: bool) -> str:
        if all_yes:
            reads: dict[str, tuple[int, Version]] = {}
            for _, r in st.votes.values():
                reads.update(r)
            try:
                _, writes = smallbank.execute(st.tx.op, lambda key: reads[key])
            except (smallbank.ApplicationError, KeyError):
                all_yes = False
            else:
                for z in st.zones:
                    st.writes[z] = tuple((k, v) for k, v in writes if ownership(k) == z)
        st.phase = "commit" if all_yes else "abort"
        return st.phase

    def ack(self, txid: str, zone: int) -> Optional[str]:
        """Returns the final outcome when the last involved zone acknowledges."""
        st = self.inflight.get(txid)
        if st is None or not st.decided or st.phase == "done":
            return None
        st.acks.add(zone)
        if st.acks >= set(st.zones):
            outcome = "committed" if st.phase == "commit" else "aborted"
            st.phase = "done"
            self.outcomes[txid] = outcome
            return outcome
        return None

    def unacked(self, txid: str) -> tuple[int, ...]:
        st = self.inflight[txid]
        return tuple(z for z in st.zones if z not in st.acks)
