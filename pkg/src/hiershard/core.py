"""Domain model shared by every subsystem: identities, keys, versions,
transactions, local blocks, certificates and protocol configuration."""

from __future__ import annotations

import dataclasses
import enum
import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .codec import Digest, digest_of

ZoneId = int
MemberId = str


class SchemaError(ValueError):
    """A state key does not follow the ``zNN/...`` schema."""


class ClassificationError(ValueError):
    """A transaction touches no keys."""


class CertificateError(ValueError):
    """A certificate failed verification."""


# -- identities ---------------------------------------------------------------

def full_member_id(zone: ZoneId) -> MemberId:
    return f"F{zone}"


def local_member_id(zone: ZoneId, index: int) -> MemberId:
    return f"L{zone}.{index}"


def standby_id(zone: ZoneId) -> MemberId:
    return f"S{zone}"


@dataclass(frozen=True)
class Topology:
    zones: int
    f_local: int
    f_full: int
    full_members: tuple[MemberId, ...]
    local_members: tuple[tuple[MemberId, ...], ...]
    standbys: tuple[MemberId, ...]

    @classmethod
    def build(cls, zones: int, f_local: int = 1, f_full: Optional[int] = None) -> "Topology":
        if zones < 1:
            raise ValueError("need at least one zone")
        if f_full is None:
            f_full = (zones - 1) // 3
        topo = cls(
            zones=zones,
            f_local=f_local,
            f_full=f_full,
            full_members=tuple(full_member_id(z) for z in range(zones)),
            local_members=tuple(
                tuple(local_member_id(z, j) for j in range(3 * f_local + 1))
                for z in range(zones)
            ),
            standbys=tuple(standby_id(z) for z in range(zones)),
        )
        topo.check()
        return topo

    def check(self) -> None:
        if len(self.full_members) != self.zones:
            raise ValueError("one full member per zone")
        if self.zones < 3 * self.f_full + 1:
            raise ValueError(f"{self.zones} zones cannot tolerate f_full={self.f_full}")
        locals_all = set()
        for members in self.local_members:
            if len(members) != 3 * self.f_local + 1:
                raise ValueError("each zone needs 3*f_local+1 local members")
            locals_all.update(members)
        if locals_all & set(self.full_members):
            raise ValueError("full and local member identities overlap")

    # Byzantine quorum over the full-member population. Equals 2f+1 when
    # n = 3f+1 and stays intersecting (in >= f+1 members) for larger n.
    @property
    def full_quorum(self) -> int:
        return math.ceil((self.zones + self.f_full + 1) / 2)

    @property
    def commit_votes(self) -> int:
        """Round r+1 references needed to commit an anchor (f+1 at n=3f+1)."""
        return self.zones - self.full_quorum + 1

    @property
    def proc_quorum(self) -> int:
        return self.f_full + 1

    @property
    def local_quorum(self) -> int:
        return 2 * self.f_local + 1

    def zone_size(self) -> int:
        return 3 * self.f_local + 2

    def zone_of(self, member: MemberId) -> ZoneId:
        if member[0] in "FS":
            return int(member[1:])
        if member[0] == "L":
            return int(member[1:].split(".")[0])
        raise ValueError(f"not a member id: {member}")

    def all_members(self) -> list[MemberId]:
        out = list(self.full_members) + list(self.standbys)
        for members in self.local_members:
            out.extend(members)
        return out


# -- keys and versions --------------------------------------------------------

_KEY_RE = re.compile(r"^z(\d{2,})/([a-z]+)/(\d+)$")


def account_key(zone: ZoneId, index: int) -> str:
    return f"z{zone:02d}/acct/{index:06d}"


def ownership(key: str) -> ZoneId:
    """Zone owning ``key`` (pure prefix decode)."""
    m = _KEY_RE.match(key) if isinstance(key, str) else None
    if m is None:
        raise SchemaError(f"malformed key {key!r}")
    return int(m.group(1))


class Version(NamedTuple):
    block: int
    offset: int

    def canonical(self):
        return (self.block, self.offset)


GENESIS_BLOCK = 0

# Speculative local writes live in the upper half of the offset space, above
# every main-chain sequence number, so they sort after main-chain writes of the
# same sync epoch and before anything minted by the next main block.
SPECULATIVE_BASE = 1 << 48
BLOCK_STRIDE = 1 << 20


def speculative_version(sync_epoch: int, local_block: int, slot: int) -> Version:
    """Version of the ``slot``-th write position inside local block ``local_block``.

    ``sync_epoch`` is the last main block whose sync entries the local chain
    applied before this block.
    """
    return Version(sync_epoch, SPECULATIVE_BASE + local_block * BLOCK_STRIDE + slot)


def genesis_version(index: int) -> Version:
    return Version(GENESIS_BLOCK, index)


# -- transactions -------------------------------------------------------------

class TxKind(str, enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


class TxType(NamedTuple):
    kind: TxKind
    zone: Optional[ZoneId] = None

    @classmethod
    def local(cls, zone: ZoneId) -> "TxType":
        return cls(TxKind.LOCAL, zone)

    @property
    def is_local(self) -> bool:
        return self.kind is TxKind.LOCAL

    def canonical(self):
        return (self.kind.value, self.zone)

    def __str__(self) -> str:
        return f"Local({self.zone})" if self.is_local else "Global"


GLOBAL = TxType(TxKind.GLOBAL)


@dataclass(frozen=True)
class Operation:
    """Application call descriptor: operation name, touched keys, amount."""

    name: str
    keys: tuple[str, ...]
    amount: int = 0

    def canonical(self):
        return (self.name, self.keys, self.amount)


@dataclass(frozen=True)
class Signature:
    member: str
    nonce: int

    def canonical(self):
        return (self.member, self.nonce)


@dataclass(frozen=True)
class Transaction:
    txid: str
    op: Operation
    submit_zone: ZoneId
    client_time: int
    tx_type: TxType = GLOBAL
    read_set: tuple[tuple[str, Version], ...] = ()
    write_set: tuple[tuple[str, int], ...] = ()
    client_sig: Optional[Signature] = None
    size_bytes: int = 0

    def keys(self) -> tuple[str, ...]:
        return self.op.keys

    @property
    def is_local(self) -> bool:
        return self.tx_type.is_local

    def with_rwset(self, reads, writes) -> "Transaction":
        return dataclasses.replace(self, read_set=tuple(reads), write_set=tuple(writes))

    def body(self):
        return (self.txid, self.op, self.submit_zone, self.client_time)

    def canonical(self):
        return (
            self.txid, self.op, self.submit_zone, self.client_time, self.tx_type,
            self.read_set, self.write_set, self.client_sig,
        )


def classify_transaction(tx: Transaction, submit_zone: ZoneId) -> TxType:
    """Local(submit_zone) iff every touched key is owned by ``submit_zone``."""
    keys = list(tx.keys()) + [k for k, _ in tx.read_set] + [k for k, _ in tx.write_set]
    if not keys:
        raise ClassificationError(f"{tx.txid} touches no keys")
    if all(ownership(k) == submit_zone for k in keys):
        return TxType.local(submit_zone)
    return GLOBAL


# -- local blocks -------------------------------------------------------------

class BlockHeader(NamedTuple):
    zone: ZoneId
    number: int
    digest: Digest

    def canonical(self):
        return (self.zone, self.number, self.digest)


@dataclass(frozen=True)
class TwoPCApply:
    """Coordinator decision carried into a zone's local chain."""

    txid: str
    writes: tuple[tuple[str, int], ...]
    decision_sig: Signature

    def canonical(self):
        return (self.txid, self.writes, self.decision_sig)


@dataclass(frozen=True)
class Certificate:
    kind: str
    subject: Digest
    signers: tuple[Signature, ...]
    quorum: int

    def canonical(self):
        return (self.kind, self.subject, self.signers, self.quorum)

    def signer_ids(self) -> list[str]:
        return [s.member for s in self.signers]


@dataclass(frozen=True)
class LocalBlock:
    zone: ZoneId
    number: int
    prev_hash: Digest
    txs: tuple[Transaction, ...]
    syncs: tuple[int, ...] = ()
    applies: tuple[TwoPCApply, ...] = ()
    local_cert: Optional[Certificate] = field(default=None, compare=False)

    def canonical(self):
        return (self.zone, self.number, self.prev_hash, self.txs, self.syncs, self.applies)

    @property
    def hash(self) -> Digest:
        h = self.__dict__.get("_hash")
        if h is None:
            h = digest_of(self)
            object.__setattr__(self, "_hash", h)
        return h

    def header(self) -> BlockHeader:
        return BlockHeader(self.zone, self.number, self.hash)

    def with_cert(self, cert: Certificate) -> "LocalBlock":
        blk = dataclasses.replace(self, local_cert=cert)
        object.__setattr__(blk, "_hash", self.hash)
        return blk

    def size_bytes(self, header_bytes: int = 256) -> int:
        return header_bytes + sum(t.size_bytes for t in self.txs) + 64 * len(self.applies)


# -- signatures and certificates -----------------------------------------------

class SignatureRegistry:
    """Unforgeable signature tokens.

    A token is only valid if this registry issued it to that member over that
    exact subject; nobody can mint a token for another member.
    """

    def __init__(self) -> None:
        self._issued: dict[tuple[str, int], Digest] = {}
        self._nonce = itertools.count(1)

    def sign(self, member: str, subject: Digest) -> Signature:
        sig = Signature(member, next(self._nonce))
        self._issued[(member, sig.nonce)] = subject
        return sig

    def verify(self, sig: Signature, subject: Digest) -> bool:
        return self._issued.get((sig.member, sig.nonce)) == subject

    def signer(self, member: str) -> "Signer":
        return Signer(self, member)


@dataclass(frozen=True)
class Signer:
    registry: SignatureRegistry
    member: str

    def sign(self, subject: Digest) -> Signature:
        return self.registry.sign(self.member, subject)


def subject(kind: str, *fields) -> Digest:
    """Domain-separated digest that a signature or certificate commits to."""
    return digest_of((kind,) + fields)


def make_certificate(kind: str, subj: Digest, sigs: Iterable[Signature], quorum: int) -> Certificate:
    ordered = tuple(sorted(sigs, key=lambda s: (s.member, s.nonce)))
    return Certificate(kind, subj, ordered, quorum)


def check_certificate(
    cert: Certificate,
    registry: SignatureRegistry,
    population: Iterable[str],
    quorum: int,
    kind: Optional[str] = None,
    subj: Optional[Digest] = None,
) -> None:
    """Raise ``CertificateError`` unless ``cert`` carries ``quorum`` distinct,
    genuine signatures from ``population``."""
    if kind is not None and cert.kind != kind:
        raise CertificateError(f"expected {kind} certificate, got {cert.kind}")
    if subj is not None and cert.subject != subj:
        raise CertificateError("certificate subject mismatch")
    members = [s.member for s in cert.signers]
    if len(set(members)) != len(members):
        raise CertificateError("duplicate signer")
    allowed = set(population)
    outsiders = [m for m in members if m not in allowed]
    if outsiders:
        raise CertificateError(f"signers outside population: {outsiders}")
    if len(members) < quorum:
        raise CertificateError(f"{len(members)} signers below quorum {quorum}")
    for sig in cert.signers:
        if not registry.verify(sig, cert.subject):
            raise CertificateError(f"forged token for {sig.member}")


def certificate_ok(cert, registry, population, quorum, kind=None, subj=None) -> bool:
    if cert is None:
        return False
    try:
        check_certificate(cert, registry, population, quorum, kind, subj)
    except CertificateError:
        return False
    return True


# -- configuration -------------------------------------------------------------

class Scheme(str, enum.Enum):
    BALANCED = "balanced"
    AVAILABILITY = "availability"
    PERFORMANCE = "performance"


MS = 1_000
SECOND = 1_000_000


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol parameters. All durations are integer microseconds."""

    delta_sync: int = 100 * MS
    delta_gst: int = 3 * SECOND
    max_digests_per_vertex: int = 40
    max_vertex_delay: int = 800 * MS
    local_block_batch_size: int = 50
    local_block_timeout: int = 500 * MS
    scheme: Scheme = Scheme.BALANCED
    scheduling: bool = True
    tx_size_bytes: int = 2890
    local_block_size_bytes: int = 1_400_000
    prepare_timeout: int = 300 * MS
    # processing cost model, microseconds per item
    cost_block_overhead: int = 0
    cost_validate: int = 40
    cost_execute: int = 120
    cost_sync_entry: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.scheme, Scheme):
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not (self.delta_gst >= self.delta_sync > 0):
            raise ValueError("require delta_gst >= delta_sync > 0")
        if self.max_digests_per_vertex < 1:
            raise ValueError("max_digests_per_vertex must be >= 1")
        if self.local_block_batch_size < 1:
            raise ValueError("local_block_batch_size must be >= 1")
        if self.local_block_batch_size >= BLOCK_STRIDE // 2:
            raise ValueError("local_block_batch_size too large for version encoding")
