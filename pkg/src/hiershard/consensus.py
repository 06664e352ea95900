"""Bullshark-style commit rule evaluated locally over a DagView."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .core import BlockHeader
from .mempool import DagView


class ContractViolation(ValueError):
    pass


class IntegrityError(RuntimeError):
    """Committed order would skip a local block number."""


class Membership:
    """Full-member slot assignment over rounds.

    Slot ``z`` belongs to zone ``z``. A replacement takes effect from a given
    round onward, so every node maps round -> member identically no matter when
    it learns of the change.
    """

    def __init__(self, initial) -> None:
        self.initial = tuple(initial)
        self._changes: list[tuple[int, int, str]] = []

    def grant(self, slot: int, member: str, effective_round: int) -> None:
        for r, s, _ in self._changes:
            if s == slot and r >= effective_round:
                raise ValueError("membership changes must move forward")
        self._changes.append((effective_round, slot, member))

    def members_at(self, r: int) -> tuple[str, ...]:
        out = list(self.initial)
        for eff, slot, member in self._changes:
            if eff <= r:
                out[slot] = member
        return tuple(out)

    def slot_of(self, member: str) -> Optional[int]:
        for eff, slot, m in self._changes:
            if m == member:
                return slot
        return self.initial.index(member) if member in self.initial else None

    def first_round(self, member: str) -> int:
        for eff, slot, m in self._changes:
            if m == member:
                return eff
        return 1

    def ever(self) -> tuple[str, ...]:
        return self.initial + tuple(m for _, _, m in self._changes)

    def current(self) -> tuple[str, ...]:
        return self.members_at(1 << 62)

    def __len__(self) -> int:
        return len(self.initial)


def anchor_for_round(r: int, members) -> str:
    """Round-robin anchor of even round ``r`` over the member list."""
    if r < 2 or r % 2:
        raise ContractViolation(f"anchors live on even rounds >= 2, got {r}")
    return members[(r // 2 - 1) % len(members)]


@dataclass(frozen=True)
class Commit:
    k: int
    anchor: tuple[int, str]
    tau: tuple[BlockHeader, ...]
    vertices: tuple[tuple[int, str], ...]


@dataclass
class CommitState:
    last_round: int = 0
    last_anchor: Optional[tuple[int, str]] = None
    committed: int = 0
    emitted: int = 0
    zone_high: dict = field(default_factory=dict)
    anchors: list = field(default_factory=list)


class Bullshark:
    def __init__(self, view: DagView, membership: Membership, commit_votes: int,
                 state: Optional[CommitState] = None) -> None:
        self.view = view
        self.membership = membership
        self.commit_votes = commit_votes
        self.state = state or CommitState()

    def anchor(self, r: int) -> tuple[int, str]:
        return (r, anchor_for_round(r, self.membership.members_at(r)))

    def try_commit(self) -> list[tuple[int, str]]:
        """Newly committed anchors, in round order."""
        view, st = self.view, self.state
        top = None
        r = view.max_round - 1
        if r % 2:
            r -= 1
        while r > st.last_round:
            a = self.anchor(r)
            if a in view and view.strong_refs(a, r + 1) >= self.commit_votes:
                top = a
                break
            r -= 2
        if top is None:
            return []
        chain = [top]
        r = top[0] - 2
        while r > st.last_round:
            a = self.anchor(r)
            if a in view and view.strong_path(chain[-1], a):
                chain.append(a)
            r -= 2
        chain.reverse()
        return chain

    def order_subdag(self, anchor: tuple[int, str]) -> Commit:
        """Flatten the anchor's uncommitted causal history into tau."""
        view, st = self.view, self.state
        root = view.node(anchor)
        if anchor[0] <= st.last_round:
            raise ContractViolation("anchor rounds must increase")
        pending = root.history & ~st.committed
        order: list[tuple[int, str]] = []
        seen = set()
        stack = [(anchor, False)]
        while stack:
            vid, expanded = stack.pop()
            if expanded:
                order.append(vid)
                continue
            if vid in seen:
                continue
            seen.add(vid)
            stack.append((vid, True))
            v = view.get(vid)
            parents = sorted({ref.vid for ref in v.all_parents()}, reverse=True)
            for p in parents:
                if p not in seen and (pending >> view.node(p).index) & 1:
                    stack.append((p, False))
        tau = []
        for vid in order:
            for h in view.get(vid).digests:
                high = st.zone_high.get(h.zone, 0)
                if h.number <= high:
                    continue
                if h.number != high + 1:
                    raise IntegrityError(f"zone {h.zone}: block {h.number} after {high}")
                st.zone_high[h.zone] = h.number
                tau.append(h)
        st.committed |= pending
        st.last_round = anchor[0]
        st.last_anchor = anchor
        st.emitted += 1
        st.anchors.append(anchor)
        return Commit(st.emitted, anchor, tuple(tau), tuple(order))

    def step(self) -> list[Commit]:
        return [self.order_subdag(a) for a in self.try_commit()]
