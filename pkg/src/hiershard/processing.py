"""Main-block materialization and processing, sync entries, processing proofs."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import smallbank
from .codec import ZERO_DIGEST, Digest, digest_of
from .core import (
    BlockHeader,
    Certificate,
    LocalBlock,
    ProtocolConfig,
    Signature,
    Version,
    make_certificate,
    ownership,
    speculative_version,
    subject,
)
from .statedb import StateDB, SyncEntry, WriteOrigin

PROOF = "proc-proof"
CERT_PROC = "cert-proc"


class IntegrityError(RuntimeError):
    """A committed digest cannot be resolved to a stored block."""


class MissingBlocks(LookupError):
    def __init__(self, headers):
        super().__init__(f"{len(headers)} blocks missing")
        self.headers = list(headers)


@dataclass(frozen=True)
class MainBlock:
    k: int
    prev_hash: Digest
    hdrs: tuple[BlockHeader, ...]
    blocks: tuple[LocalBlock, ...] = field(compare=False, default=())

    def canonical(self):
        return (self.k, self.prev_hash, self.hdrs)

    @property
    def hash(self) -> Digest:
        h = self.__dict__.get("_hash")
        if h is None:
            h = digest_of(self)
            object.__setattr__(self, "_hash", h)
        return h


def create_main_block(resolve: Callable[[BlockHeader], Optional[LocalBlock]], tau, k: int,
                      prev_hash: Digest) -> MainBlock:
    """Assemble B_k in tau order. Raises ``MissingBlocks`` listing unresolved headers."""
    blocks, missing = [], []
    for h in tau:
        b = resolve(h)
        if b is None or b.hash != h.digest:
            missing.append(h)
        else:
            blocks.append(b)
    if missing:
        raise MissingBlocks(missing)
    return MainBlock(k, prev_hash, tuple(tau), tuple(blocks))


@dataclass(frozen=True)
class SyncEntries:
    k: int
    per_zone: dict  # zone -> tuple[SyncEntry]
    aborted: dict  # zone -> tuple[txid] of that zone's transactions that aborted
    zone_digests: tuple[Digest, ...]
    global_digest: Digest

    def for_zone(self, z: int):
        return self.per_zone.get(z, ())

    def aborted_in(self, z: int):
        return self.aborted.get(z, ())


def zone_digest(k: int, z: int, entries, aborted) -> Digest:
    return digest_of(("ents", k, z, tuple(entries), tuple(aborted)))


def global_digest(k: int, zone_digests) -> Digest:
    return digest_of(("ents-global", k, tuple(zone_digests)))


def seal_entries(k: int, zones: int, per_zone, aborted) -> SyncEntries:
    per_zone = {z: tuple(v) for z, v in per_zone.items() if v}
    aborted = {z: tuple(v) for z, v in aborted.items() if v}
    zd = tuple(zone_digest(k, z, per_zone.get(z, ()), aborted.get(z, ())) for z in range(zones))
    return SyncEntries(k, per_zone, aborted, zd, global_digest(k, zd))


def append_entry(per_zone, db: StateDB, txid: str, wset) -> None:
    """Record the latest main-chain value of every written key under its owner."""
    for key, _ in wset:
        value, version = db.get_state(key)
        per_zone[ownership(key)].append(SyncEntry(txid, key, value, version))


@dataclass
class Abort:
    txid: str
    zone: int
    kind: str  # local | global
    conflicts: tuple = ()  # (key, origin) of the winning write for local aborts
    reason: str = ""


@dataclass
class ProcessResult:
    k: int
    ents: SyncEntries
    committed: list = field(default_factory=list)
    aborts: list = field(default_factory=list)
    cost: int = 0
    final_values: dict = field(default_factory=dict)
    local_count: int = 0
    global_count: int = 0

    def same_block_interference(self) -> int:
        n = 0
        for a in self.aborts:
            if a.kind == "local" and any(o.kind == "global" and o.main_block == self.k for _, o in a.conflicts):
                n += 1
        return n


class MainLedger:
    """Main-chain StateDB plus the per-zone bookkeeping needed to re-derive
    speculative versions of committed local writes."""

    def __init__(self, db: StateDB, zones: int) -> None:
        self.db = db
        self.zones = zones
        self.epochs = [0] * zones
        self.k = 0
        self.head = ZERO_DIGEST
        self.state_digests: dict[int, Digest] = {0: db.digest}

    def copy(self) -> "MainLedger":
        other = MainLedger(self.db.copy(), self.zones)
        other.epochs = list(self.epochs)
        other.k = self.k
        other.head = self.head
        other.state_digests = dict(self.state_digests)
        return other


def processing_cost(cfg: ProtocolConfig, local_per_zone: dict, n_global: int, n_entries: int,
                    scheduling: bool) -> int:
    counts = list(local_per_zone.values()) or [0]
    if scheduling:
        validate = max(counts) * cfg.cost_validate
    else:
        validate = sum(counts) * cfg.cost_validate
    return (cfg.cost_block_overhead + validate + n_global * cfg.cost_execute
            + n_entries * cfg.cost_sync_entry)


def process_main_block(ledger: MainLedger, block: MainBlock, scheduling: bool,
                       cfg: Optional[ProtocolConfig] = None) -> ProcessResult:
    """Validate local and execute global transactions of ``block``.

    With ``scheduling`` every local transaction is validated before any global
    one executes; otherwise transactions are handled strictly in tau order.
    """
    if block.k != ledger.k + 1:
        raise IntegrityError(f"main block {block.k} processed after {ledger.k}")
    if block.prev_hash != ledger.head:
        raise IntegrityError(f"main block {block.k} does not chain")
    cfg = cfg or ProtocolConfig()
    db, k = ledger.db, block.k
    seq = 0
    per_zone = defaultdict(list)
    aborted_ids = defaultdict(list)
    result = ProcessResult(k, ents=None)  # type: ignore[arg-type]
    local_per_zone: dict[int, int] = defaultdict(int)

    # (tx, zone, speculative version) in tau order
    schedule = []
    for b in block.blocks:
        if b.syncs:
            ledger.epochs[b.zone] = max(ledger.epochs[b.zone], max(b.syncs))
        epoch = ledger.epochs[b.zone]
        for slot, tx in enumerate(b.txs, start=len(b.applies)):
            schedule.append((tx, b.zone, speculative_version(epoch, b.number, slot)))
    if scheduling:
        schedule = [s for s in schedule if s[0].is_local] + [s for s in schedule if not s[0].is_local]

    for tx, zone, spec in schedule:
        if tx.is_local:
            local_per_zone[zone] += 1
            res = db.validate(tx)
            if res.ok:
                db.update(tx.write_set, spec, WriteOrigin(tx.txid, "local", k))
                result.committed.append(tx.txid)
            else:
                conflicts = tuple((key, db.origin(key)) for key in res.conflicts)
                bump = Version(k, seq)
                seq += 1
                for key, _ in tx.write_set:
                    db.bump(key, bump, WriteOrigin(tx.txid, "bump", k))
                append_entry(per_zone, db, tx.txid, tx.write_set)
                aborted_ids[zone].append(tx.txid)
                result.aborts.append(Abort(tx.txid, zone, "local", conflicts))
        else:
            result.global_count += 1
            try:
                _, writes = smallbank.execute(tx.op, db.get_state)
            except smallbank.ApplicationError as exc:
                aborted_ids[zone].append(tx.txid)
                result.aborts.append(Abort(tx.txid, zone, "global", reason=str(exc)))
                continue
            db.update(writes, Version(k, seq), WriteOrigin(tx.txid, "global", k))
            seq += 1
            append_entry(per_zone, db, tx.txid, writes)
            result.committed.append(tx.txid)
    result.local_count = sum(local_per_zone.values())
    ents = seal_entries(k, ledger.zones, per_zone, aborted_ids)
    result.ents = ents
    result.cost = processing_cost(cfg, local_per_zone, result.global_count,
                                  sum(len(v) for v in ents.per_zone.values()), scheduling)
    for entries in ents.per_zone.values():
        for e in entries:
            result.final_values[e.key] = db.get_state(e.key)[0]
    ledger.k = k
    ledger.head = block.hash
    ledger.state_digests[k] = db.digest
    return result


@dataclass(frozen=True)
class ProcessingProof:
    k: int
    block_hash: Digest
    prev_hash: Digest
    hdrs: tuple[BlockHeader, ...]
    zone_digests: tuple[Digest, ...]
    global_digest: Digest

    def canonical(self):
        return (self.k, self.block_hash, self.prev_hash, self.hdrs, self.zone_digests, self.global_digest)

    @property
    def subject(self) -> Digest:
        return subject(PROOF, self)


def make_proof(block: MainBlock, ents: SyncEntries) -> ProcessingProof:
    return ProcessingProof(block.k, block.hash, block.prev_hash, block.hdrs, ents.zone_digests, ents.global_digest)


class ProofPool:
    """Collects signed proofs per k; a certificate forms on ``quorum`` identical ones."""

    def __init__(self, quorum: int) -> None:
        self.quorum = quorum
        self._by_k: dict[int, dict[Digest, dict[str, Signature]]] = defaultdict(lambda: defaultdict(dict))
        self._proofs: dict[Digest, ProcessingProof] = {}
        self.flagged: list[tuple[int, str]] = []
        self.certs: dict[int, Certificate] = {}
        self.expected: dict[int, Digest] = {}

    def expect(self, k: int, subj: Digest) -> Optional[Certificate]:
        """Pin k to a locally computed subject; only that subject may certify."""
        self.expected[k] = subj
        done = self.certs.get(k)
        if done is not None and done.subject != subj:
            # a quorum formed on a result this member did not compute; only
            # possible when more than fF full members are faulty
            del self.certs[k]
            self.flagged = [(kk, m) for kk, m in self.flagged if kk != k]
        return self._try_certify(k, subj)

    def add(self, proof: ProcessingProof, sig: Signature) -> Optional[Certificate]:
        subj = proof.subject
        done = self.certs.get(proof.k)
        if done is not None:
            if subj != done.subject and (proof.k, sig.member) not in self.flagged:
                self.flagged.append((proof.k, sig.member))
            return None
        self._proofs[subj] = proof
        self._by_k[proof.k][subj].setdefault(sig.member, sig)
        want = self.expected.get(proof.k)
        if want is not None and want != subj:
            return None
        return self._try_certify(proof.k, subj)

    def _try_certify(self, k: int, subj: Digest) -> Optional[Certificate]:
        if k in self.certs:
            return None
        sigs = self._by_k[k][subj]
        if len(sigs) >= self.quorum:
            cert = make_certificate(CERT_PROC, subj, sigs.values(), self.quorum)
            self.certs[k] = cert
            self.flag_dissent(k, subj)
            return cert
        return None

    def flag_dissent(self, k: int, good: Digest) -> None:
        for subj, sigs in self._by_k[k].items():
            if subj != good:
                for member in sigs:
                    if (k, member) not in self.flagged:
                        self.flagged.append((k, member))

    def proof_for(self, subj: Digest) -> Optional[ProcessingProof]:
        return self._proofs.get(subj)


def exchange_and_certify(proofs: Iterable[tuple[ProcessingProof, Signature]], quorum: int):
    """Pure form of proof aggregation: ``(cert, proof, flagged_members)``."""
    pool = ProofPool(quorum)
    cert = None
    for proof, sig in proofs:
        c = pool.add(proof, sig)
        if c is not None:
            cert = c
    if cert is None:
        return None, None, []
    return cert, pool.proof_for(cert.subject), [m for _, m in pool.flagged]
