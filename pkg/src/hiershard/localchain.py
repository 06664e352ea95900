"""Per-zone local chain: speculative execution, block proposal, validation by
local members, and local commit certificates.

The proposer (the zone's full member) executes local transactions as they
arrive. Sync entries from the main chain and 2PC decisions are only folded in
at block boundaries and recorded in the next block, so validators re-execute
exactly the sequence the proposer executed.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from . import smallbank
from .codec import ZERO_DIGEST, Digest, digest_of
from .core import (
    GLOBAL,
    Certificate,
    LocalBlock,
    Signature,
    SignatureRegistry,
    Transaction,
    TwoPCApply,
    TxType,
    Version,
    classify_transaction,
    make_certificate,
    ownership,
    speculative_version,
    subject,
)
from .statedb import StateDB, SyncEntry, WriteOrigin

ENDORSE = "endorse"
LOCAL_COMMIT = "local-commit"


class Rejected(Exception):
    """Client transaction refused at intake."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def endorse_subject(block_hash: Digest) -> Digest:
    return subject(ENDORSE, block_hash)


class StagedState:
    """Write overlay on a StateDB; nothing reaches the base until ``commit``."""

    def __init__(self, base: StateDB) -> None:
        self.base = base
        self.writes: dict[str, tuple[int, Version, WriteOrigin]] = {}
        self.syncs: list[tuple[int, list[SyncEntry]]] = []
        # k -> {key: value} right after block k's entries were applied
        self.post_sync: dict[int, dict[str, int]] = {}

    def get_state(self, key: str) -> tuple[int, Version]:
        w = self.writes.get(key)
        if w is not None:
            return w[0], w[1]
        return self.base.get_state(key)

    def put(self, key: str, value: int, version: Version, origin: WriteOrigin) -> None:
        self.writes[key] = (value, version, origin)

    def commit(self) -> None:
        for k, entries in self.syncs:
            self.base.apply_sync_entries(entries, k)
        for key, (value, version, origin) in self.writes.items():
            if self.base.get_state(key) == (value, version):
                continue  # installed by a sync entry above
            self.base.update([(key, value)], version, origin)


@dataclass
class OpenBlock:
    number: int
    txs: list
    syncs: list
    applies: list

    def empty(self) -> bool:
        return not (self.txs or self.syncs or self.applies)

    @property
    def slot(self) -> int:
        return len(self.applies) + len(self.txs)


class LocalProposer:
    """Zone full member's local-chain role."""

    def __init__(self, zone: int, db: StateDB, batch_size: int, next_number: int = 1,
                 prev_hash: Digest = ZERO_DIGEST, sync_epoch: int = 0) -> None:
        self.zone = zone
        self.db = db
        self.batch_size = batch_size
        self.prev_hash = prev_hash
        self.sync_epoch = sync_epoch
        self.open = OpenBlock(next_number, [], [], [])
        self._queued_syncs: list[tuple[int, list[SyncEntry]]] = []
        self._queued_applies: list[TwoPCApply] = []
        self.is_locked: Callable[[str], bool] = lambda key: False
        self.on_applied: Callable[[TwoPCApply], None] = lambda ap: None

    @property
    def next_number(self) -> int:
        return self.open.number

    def handle_client_tx(self, tx: Transaction) -> Transaction:
        """Classify ``tx``; execute it speculatively if local. Raises ``Rejected``."""
        try:
            tx_type = classify_transaction(tx, self.zone)
        except Exception as exc:
            raise Rejected(f"malformed: {exc}") from None
        if tx.op.name not in smallbank.OPERATIONS:
            raise Rejected("unknown operation")
        if not tx_type.is_local:
            done = _replace_type(tx, GLOBAL)
            self.open.txs.append(done)
            return done
        if any(self.is_locked(k) for k in tx.keys()):
            raise Rejected("locked")
        version = speculative_version(self.sync_epoch, self.open.number, self.open.slot)
        try:
            reads, writes = smallbank.execute(tx.op, self.db.get_state)
        except smallbank.ApplicationError as exc:
            raise Rejected(str(exc)) from None
        self.db.update(writes, version, WriteOrigin(tx.txid, "local", 0))
        done = _replace_type(tx, tx_type).with_rwset(reads, writes)
        self.open.txs.append(done)
        return done

    def batch_full(self) -> bool:
        return len(self.open.txs) >= self.batch_size

    def has_open_content(self) -> bool:
        return not self.open.empty()

    def propose_local_block(self) -> Optional[LocalBlock]:
        """Cut the open batch into the next block. None if there is nothing to cut."""
        if self.open.empty():
            return None
        ob = self.open
        block = LocalBlock(
            zone=self.zone,
            number=ob.number,
            prev_hash=self.prev_hash,
            txs=tuple(ob.txs),
            syncs=tuple(ob.syncs),
            applies=tuple(ob.applies),
        )
        self.prev_hash = block.hash
        self.open = OpenBlock(ob.number + 1, [], [], [])
        self._drain()
        return block

    def queue_sync(self, k: int, entries: Sequence[SyncEntry]) -> None:
        """Schedule certified sync entries of main block ``k``."""
        if not entries:
            return
        self._queued_syncs.append((k, list(entries)))
        self._drain()

    def queue_apply(self, apply: TwoPCApply) -> None:
        self._queued_applies.append(apply)
        self._drain()

    def _drain(self) -> None:
        # boundary-only: never interleave with already-executed txs
        if self.open.txs:
            return
        for k, entries in self._queued_syncs:
            if self.db.apply_sync_entries(entries, k):
                self.open.syncs.append(k)
                self.sync_epoch = max(self.sync_epoch, k)
        self._queued_syncs.clear()
        for ap in self._queued_applies:
            version = speculative_version(self.sync_epoch, self.open.number, self.open.slot)
            self.db.update(ap.writes, version, WriteOrigin(ap.txid, "global", 0))
            self.open.applies.append(ap)
        applied, self._queued_applies = self._queued_applies, []
        for ap in applied:
            self.on_applied(ap)

    def pending_sync_blocks(self) -> list[int]:
        return [k for k, _ in self._queued_syncs]


def _replace_type(tx: Transaction, tx_type: TxType) -> Transaction:
    import dataclasses

    return dataclasses.replace(tx, tx_type=tx_type)


@dataclass(frozen=True)
class Endorsement:
    zone: int
    number: int
    block_hash: Digest
    sig: Signature


@dataclass(frozen=True)
class Reject:
    reason: str


class Defer(Exception):
    """Proposal cannot be judged yet (missing predecessor or sync payload)."""


class LocalValidator:
    """A local member's view of its zone's chain."""

    def __init__(self, zone: int, db: StateDB) -> None:
        self.zone = zone
        self.db = db
        self.height = 0
        self.head_hash: Digest = ZERO_DIGEST
        self.sync_epoch = 0
        self.chain: list[LocalBlock] = []
        self._staged: dict[Digest, StagedState] = {}

    def validate_local_proposal(
        self,
        block: LocalBlock,
        sync_payload: Callable[[int], Optional[list[SyncEntry]]],
        check_apply: Callable[[TwoPCApply], bool] = lambda ap: True,
    ):
        """Re-execute ``block``; return the staged state to endorse, or a ``Reject``.

        Raises ``Defer`` if a referenced sync payload has not arrived.
        """
        if block.zone != self.zone:
            return Reject("wrong-zone")
        if block.number != self.height + 1:
            if block.number > self.height + 1:
                raise Defer("gap")
            return Reject("gap")
        if block.prev_hash != self.head_hash:
            return Reject("bad-prev-hash")
        staged = StagedState(self.db)
        epoch = self.sync_epoch
        for k in block.syncs:
            if k in self.db.synced_blocks:
                return Reject("sync-replay")
            entries = sync_payload(k)
            if entries is None:
                raise Defer(f"sync {k}")
            if not entries:
                return Reject("empty-sync")
            for e in entries:
                if ownership(e.key) != self.zone:
                    return Reject("foreign-sync-key")
                staged.put(e.key, e.value, e.version, WriteOrigin(e.txid, "restore", k))
            staged.syncs.append((k, entries))
            staged.post_sync[k] = {e.key: staged.get_state(e.key)[0] for e in entries}
            epoch = max(epoch, k)
        for slot, ap in enumerate(block.applies):
            if not check_apply(ap):
                return Reject("bad-apply-token")
            version = speculative_version(epoch, block.number, slot)
            for key, value in ap.writes:
                if ownership(key) != self.zone:
                    return Reject("foreign-apply-key")
                staged.put(key, value, version, WriteOrigin(ap.txid, "global", 0))
        for slot, tx in enumerate(block.txs, start=len(block.applies)):
            try:
                expected_type = classify_transaction(tx, self.zone)
            except Exception:
                return Reject("malformed-tx")
            if tx.tx_type != expected_type:
                return Reject("misclassified")
            if not tx.is_local:
                if tx.read_set or tx.write_set:
                    return Reject("global-with-rwset")
                continue
            version = speculative_version(epoch, block.number, slot)
            try:
                reads, writes = smallbank.execute(tx.op, staged.get_state)
            except smallbank.ApplicationError:
                return Reject("rwset-mismatch")
            if tuple(reads) != tx.read_set or tuple(writes) != tx.write_set:
                return Reject("rwset-mismatch")
            for key, value in writes:
                staged.put(key, value, version, WriteOrigin(tx.txid, "local", 0))
        self._staged[block.hash] = staged
        return staged

    def is_validated(self, block_hash: Digest) -> bool:
        return block_hash in self._staged

    def staged(self, block_hash: Digest) -> StagedState:
        return self._staged[block_hash]

    def commit(self, block: LocalBlock) -> StagedState:
        staged = self._staged.pop(block.hash)
        staged.commit()
        self.height = block.number
        self.head_hash = block.hash
        if block.syncs:
            self.sync_epoch = max(self.sync_epoch, max(block.syncs))
        self.chain.append(block)
        self._staged.clear()
        return staged

    def state_digest(self) -> Digest:
        return digest_of((self.height, self.head_hash, self.db.digest,
                          tuple(sorted(self.db.synced_blocks)), self.sync_epoch))


def form_local_commit_cert(
    endorsements: Iterable[Endorsement],
    population: Iterable[str],
    quorum: int,
    registry: Optional[SignatureRegistry] = None,
) -> Optional[Certificate]:
    """Certificate over the block digest that gathered ``quorum`` endorsements."""
    allowed = set(population)
    by_digest: dict[Digest, dict[str, Signature]] = defaultdict(dict)
    for e in endorsements:
        if e.sig.member not in allowed:
            continue
        subj = endorse_subject(e.block_hash)
        if registry is not None and not registry.verify(e.sig, subj):
            continue
        by_digest[e.block_hash].setdefault(e.sig.member, e.sig)
    for block_hash, sigs in sorted(by_digest.items()):
        if len(sigs) >= quorum:
            return make_certificate(LOCAL_COMMIT, endorse_subject(block_hash), sigs.values(), quorum)
    return None
