"""DAG mempool: per-zone block stores, vertices, and each full member's DAG view.

Causal histories are kept as Python-int bitsets indexed by inclusion order,
so ancestry checks and sub-DAG extraction are single big-int operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .codec import Digest, digest_of
from .core import BlockHeader, Certificate, LocalBlock, certificate_ok, subject

ACK = "ack"
VOTE = "vote"
CERT_AVAIL = "cert-avail"
CERT_INCLUSION = "cert-inclusion"


def ack_subject(header: BlockHeader) -> Digest:
    return subject(ACK, header.zone, header.number, header.digest)


class ZoneMempool:
    """M_z: blocks of one zone, with the Next()/Pop() cursor over available ones."""

    def __init__(self, zone: int, next_number: int = 1) -> None:
        self.zone = zone
        self.blocks: dict[int, LocalBlock] = {}
        self.by_digest: dict[Digest, LocalBlock] = {}
        self.available: dict[int, Certificate] = {}
        self._next = next_number

    def store(self, block: LocalBlock) -> bool:
        if block.zone != self.zone:
            raise ValueError(f"block of zone {block.zone} offered to M_{self.zone}")
        if block.number in self.blocks:
            return False
        self.blocks[block.number] = block
        self.by_digest[block.hash] = block
        return True

    def get(self, digest: Digest) -> Optional[LocalBlock]:
        return self.by_digest.get(digest)

    def next(self) -> int:
        return self._next

    def pop(self) -> Optional[int]:
        """Remove and return the lowest available number if it equals Next()."""
        if self._next not in self.available:
            return None
        n = self._next
        self._next += 1
        return n

    def mark_available(self, number: int, cert: Certificate) -> None:
        self.available.setdefault(number, cert)

    def build_candidates(self, number: int) -> list[tuple[BlockHeader, Certificate]]:
        """Gap-free run of available blocks starting at ``number`` (empty if deferred)."""
        if number != self._next:
            return []
        out = []
        while (n := self.pop()) is not None:
            out.append((self.blocks[n].header(), self.available[n]))
        return out

    def reset_cursor(self, next_number: int) -> None:
        self._next = next_number


@dataclass(frozen=True, order=True)
class VertexRef:
    round: int
    creator: str
    digest: Digest

    def canonical(self):
        return (self.round, self.creator, self.digest)

    @property
    def vid(self) -> tuple[int, str]:
        return (self.round, self.creator)


@dataclass(frozen=True)
class Vertex:
    creator: str
    round: int
    digests: tuple[BlockHeader, ...]
    avail_certs: tuple[Certificate, ...] = ()
    parents: tuple[tuple[VertexRef, Certificate], ...] = ()
    weak: tuple[tuple[VertexRef, Certificate], ...] = ()

    def canonical(self):
        return (
            self.creator, self.round, self.digests,
            tuple(r for r, _ in self.parents), tuple(r for r, _ in self.weak),
        )

    @property
    def hash(self) -> Digest:
        h = self.__dict__.get("_hash")
        if h is None:
            h = digest_of(self)
            object.__setattr__(self, "_hash", h)
        return h

    @property
    def vid(self) -> tuple[int, str]:
        return (self.round, self.creator)

    def ref(self) -> VertexRef:
        return VertexRef(self.round, self.creator, self.hash)

    def all_parents(self) -> list[VertexRef]:
        return [r for r, _ in self.parents] + [r for r, _ in self.weak]

    def size_bytes(self) -> int:
        return 192 + 48 * len(self.digests) + 96 * (len(self.parents) + len(self.weak))


def vote_subject(ref: VertexRef) -> Digest:
    return subject(VOTE, ref.round, ref.creator, ref.digest)


@dataclass
class _Node:
    vertex: Vertex
    cert: Certificate
    index: int
    history: int  # bitset over inclusion indices, self included
    strong: int
    zone_high: tuple[int, ...]


class DagView:
    """Certified vertices held by one full member."""

    def __init__(self, zones: int, zone_of_member) -> None:
        self.zones = zones
        self.zone_of_member = zone_of_member
        self._nodes: dict[tuple[int, str], _Node] = {}
        self._by_index: list[_Node] = []
        self.rounds: dict[int, dict[str, tuple[int, str]]] = {}
        self.max_round = 0

    def __contains__(self, vid) -> bool:
        return vid in self._nodes

    def copy(self) -> "DagView":
        other = DagView(self.zones, self.zone_of_member)
        other._nodes = dict(self._nodes)
        other._by_index = list(self._by_index)
        other.rounds = {r: dict(m) for r, m in self.rounds.items()}
        other.max_round = self.max_round
        return other

    def max_zone_high(self, zone: int) -> int:
        return max((n.zone_high[zone] for n in self._by_index), default=0)

    def __len__(self) -> int:
        return len(self._by_index)

    def get(self, vid) -> Optional[Vertex]:
        n = self._nodes.get(vid)
        return n.vertex if n else None

    def cert(self, vid) -> Optional[Certificate]:
        n = self._nodes.get(vid)
        return n.cert if n else None

    def node(self, vid) -> _Node:
        return self._nodes[vid]

    def by_index(self, i: int) -> _Node:
        return self._by_index[i]

    def round_vertices(self, r: int) -> list[tuple[int, str]]:
        return sorted(self.rounds.get(r, {}).values())

    def count(self, r: int) -> int:
        return len(self.rounds.get(r, ()))

    def missing_parents(self, v: Vertex) -> list[VertexRef]:
        out = []
        for ref in v.all_parents():
            n = self._nodes.get(ref.vid)
            if n is None or n.vertex.hash != ref.digest:
                out.append(ref)
        return out

    def history_high(self, v: Vertex) -> tuple[int, ...]:
        """Per-zone highest block number in the causal history of v's parents."""
        high = [0] * self.zones
        for ref in v.all_parents():
            zh = self._nodes[ref.vid].zone_high
            for z in range(self.zones):
                if zh[z] > high[z]:
                    high[z] = zh[z]
        return tuple(high)

    def include(self, v: Vertex, cert: Certificate) -> bool:
        """Insert a certified vertex whose parents are all present. False if known."""
        if v.vid in self._nodes:
            return False
        missing = self.missing_parents(v)
        if missing:
            raise KeyError(f"parents missing for {v.vid}: {[m.vid for m in missing]}")
        index = len(self._by_index)
        history = 1 << index
        strong = 1 << index
        for ref, _ in v.parents:
            p = self._nodes[ref.vid]
            history |= p.history
            strong |= p.strong
        for ref, _ in v.weak:
            history |= self._nodes[ref.vid].history
        high = list(self.history_high(v))
        for h in v.digests:
            if h.number > high[h.zone]:
                high[h.zone] = h.number
        node = _Node(v, cert, index, history, strong, tuple(high))
        self._nodes[v.vid] = node
        self._by_index.append(node)
        self.rounds.setdefault(v.round, {})[v.creator] = v.vid
        self.max_round = max(self.max_round, v.round)
        return True

    def strong_path(self, src, dst) -> bool:
        """True iff ``dst`` is reachable from ``src`` over strong edges."""
        a, b = self._nodes.get(src), self._nodes.get(dst)
        if a is None or b is None:
            return False
        return bool(a.strong >> b.index & 1)

    def in_history(self, src, dst) -> bool:
        a, b = self._nodes.get(src), self._nodes.get(dst)
        if a is None or b is None:
            return False
        return bool(a.history >> b.index & 1)

    def strong_refs(self, target, r: int) -> int:
        """Number of round-``r`` vertices with ``target`` as a strong parent."""
        t = self._nodes.get(target)
        if t is None:
            return 0
        count = 0
        for vid in self.rounds.get(r, {}).values():
            if any(ref.vid == target and ref.digest == t.vertex.hash for ref, _ in self._nodes[vid].vertex.parents):
                count += 1
        return count

    def tips_outside(self, history: int, below_round: int) -> list[tuple[int, str]]:
        """Vertices of rounds < ``below_round`` not covered by ``history`` and not
        covered by each other (weak-parent candidates)."""
        out = []
        covered = history
        for node in reversed(self._by_index):
            if node.vertex.round >= below_round:
                continue
            if covered >> node.index & 1:
                continue
            out.append(node.vertex.vid)
            covered |= node.history
        return sorted(out)

    def vertices(self) -> Iterable[Vertex]:
        return (n.vertex for n in self._by_index)

    def index_to_vid(self, bitset: int) -> list[tuple[int, str]]:
        out = []
        i = 0
        while bitset:
            if bitset & 1:
                out.append(self._by_index[i].vertex.vid)
            bitset >>= 1
            i += 1
        return out


def check_vertex(
    v: Vertex,
    view: DagView,
    members: tuple[str, ...],
    population,
    creator_zone: int,
    full_quorum: int,
    cap: int,
    registry,
) -> Optional[str]:
    """Reason the vertex must not be voted for, or None if it is acceptable.

    ``members`` is the full-member set for ``v.round``; ``population`` is every
    identity that has held a full-member slot, against which older
    certificates are checked. Parents must already be in ``view``.
    """
    if v.creator not in members:
        return "not-a-member"
    if v.round < 1:
        return "bad-round"
    if len(v.digests) > cap:
        return "too-many-digests"
    if len(v.avail_certs) != len(v.digests):
        return "missing-avail-cert"
    if v.round == 1:
        if v.parents or v.weak:
            return "round-1-parents"
    else:
        creators = [ref.creator for ref, _ in v.parents]
        if len(set(creators)) != len(creators):
            return "duplicate-parent"
        if any(ref.round != v.round - 1 for ref, _ in v.parents):
            return "parent-round"
        if len(v.parents) < full_quorum:
            return "too-few-parents"
        if any(ref.round >= v.round - 1 for ref, _ in v.weak):
            return "weak-round"
    if view.missing_parents(v):
        return "missing-parents"
    for ref, cert in list(v.parents) + list(v.weak):
        if not certificate_ok(cert, registry, population, full_quorum, CERT_INCLUSION, vote_subject(ref)):
            return "bad-parent-cert"
    high = view.history_high(v)
    expected = high[creator_zone] + 1
    for h, cert in zip(v.digests, v.avail_certs):
        if h.zone != creator_zone:
            return "foreign-digest"
        if h.number != expected:
            return "order"
        if not certificate_ok(cert, registry, population, full_quorum, CERT_AVAIL, ack_subject(h)):
            return "bad-avail-cert"
        expected += 1
    return None

