"""Versioned key-value state with MVCC validation.

One class serves both scopes: the main-chain state DB kept by full members
(``zone=None``) and the speculative shard state of a zone's local chain.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

from . import codec
from .core import Transaction, Version, genesis_version, ownership

_MOD = 1 << 256


class NotFound(KeyError):
    pass


class OrderingViolation(RuntimeError):
    """A write tried to move a key's version backwards."""


class OwnershipViolation(ValueError):
    pass


class ContractViolation(ValueError):
    pass


class WriteOrigin(NamedTuple):
    txid: str
    kind: str  # genesis | local | global | restore
    main_block: int


GENESIS_ORIGIN = WriteOrigin("", "genesis", 0)


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    conflicts: tuple[str, ...] = ()

    @classmethod
    def success(cls) -> "ValidationResult":
        return cls(True)


class SyncEntry(NamedTuple):
    txid: str
    key: str
    value: int
    version: Version

    def canonical(self):
        return (self.txid, self.key, self.value, self.version)


def key_index(key: str) -> int:
    return int(key.rsplit("/", 1)[1])


def _entry_hash(key: str, value: int, version: Version) -> int:
    return int.from_bytes(hashlib.sha256(codec.encode((key, value, version))).digest(), "big")


class StateDB:
    """Map key -> (value, version) with an incrementally maintained digest."""

    def __init__(self, zone: Optional[int] = None, default: Optional[int] = None) -> None:
        self.zone = zone
        self.default = default
        self._entries: dict[str, tuple[int, Version]] = {}
        self._origins: dict[str, WriteOrigin] = {}
        self._acc = 0
        self._synced: set[int] = set()

    @classmethod
    def genesis(cls, balances: Iterable[tuple[str, int]], zone: Optional[int] = None) -> "StateDB":
        db = cls(zone)
        for key, value in balances:
            if zone is not None and ownership(key) != zone:
                continue
            db._put(key, value, genesis_version(key_index(key)), GENESIS_ORIGIN)
        return db

    # -- reads --

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get_state(self, key: str) -> tuple[int, Version]:
        try:
            return self._entries[key]
        except KeyError:
            if self.default is not None:
                return self.default, genesis_version(key_index(key))
            raise NotFound(key) from None

    def version(self, key: str) -> Version:
        return self.get_state(key)[1]

    def origin(self, key: str) -> WriteOrigin:
        return self._origins.get(key, GENESIS_ORIGIN)

    def items(self):
        return self._entries.items()

    def values(self) -> dict[str, int]:
        return {k: v for k, (v, _) in self._entries.items()}

    @property
    def digest(self) -> codec.Digest:
        return self._acc.to_bytes(32, "big")

    # -- writes --

    def _put(self, key: str, value: int, version: Version, origin: WriteOrigin) -> None:
        old = self._entries.get(key)
        if old is not None:
            self._acc = (self._acc - _entry_hash(key, *old)) % _MOD
        self._entries[key] = (value, version)
        self._origins[key] = origin
        self._acc = (self._acc + _entry_hash(key, value, version)) % _MOD

    def _check_scope(self, key: str) -> None:
        if self.zone is not None and ownership(key) != self.zone:
            raise OwnershipViolation(f"{key} not owned by zone {self.zone}")

    def update(self, writes, version: Version, origin: WriteOrigin = GENESIS_ORIGIN) -> None:
        """Apply ``writes`` at ``version``; all-or-nothing."""
        writes = list(writes)
        for key, _ in writes:
            self._check_scope(key)
            cur = self._entries.get(key)
            if cur is not None and not version > cur[1]:
                raise OrderingViolation(f"{key}: {version} does not follow {cur[1]}")
        for key, value in writes:
            self._put(key, value, version, origin)

    def update_versioned(self, writes, origin: WriteOrigin = GENESIS_ORIGIN) -> None:
        """Like ``update`` but each write carries its own version."""
        writes = list(writes)
        for key, _, version in writes:
            self._check_scope(key)
            cur = self._entries.get(key)
            if cur is not None and not version > cur[1]:
                raise OrderingViolation(f"{key}: {version} does not follow {cur[1]}")
        for key, value, version in writes:
            self._put(key, value, version, origin)

    def bump(self, key: str, version: Version, origin: WriteOrigin) -> int:
        """Re-stamp ``key`` with a fresh version, keeping its value."""
        value, cur = self.get_state(key)
        if not version > cur:
            raise OrderingViolation(f"{key}: {version} does not follow {cur}")
        self._put(key, value, version, origin)
        return value

    def validate(self, tx: Transaction) -> ValidationResult:
        """MVCC check of a speculatively executed local transaction.

        Succeeds iff every version in the read set is still current. Write
        keys must be a subset of the read keys (read-modify-write), which keeps
        committed versions monotone.
        """
        if not tx.read_set:
            raise ContractViolation(f"{tx.txid} has no read set")
        read_keys = {k for k, _ in tx.read_set}
        if any(k not in read_keys for k, _ in tx.write_set):
            raise ContractViolation(f"{tx.txid} has blind writes")
        conflicts = []
        for key, version in tx.read_set:
            try:
                current = self.get_state(key)[1]
            except NotFound:
                conflicts.append(key)
                continue
            if current != version:
                conflicts.append(key)
        if conflicts:
            return ValidationResult(False, tuple(conflicts))
        return ValidationResult.success()

    def apply_sync_entries(self, entries, k: int) -> bool:
        """Overwrite local state with certified main-chain values of block ``k``.

        Returns False (and does nothing) if ``k`` was already applied.
        """
        if k in self._synced:
            return False
        entries = list(entries)
        for e in entries:
            self._check_scope(e.key)
        self._synced.add(k)
        for e in entries:
            cur = self._entries.get(e.key)
            if cur is not None and not e.version > cur[1]:
                raise OrderingViolation(f"{e.key}: {e.version} does not follow {cur[1]}")
            self._put(e.key, e.value, e.version, WriteOrigin(e.txid, "restore", k))
        return True

    @property
    def synced_blocks(self) -> frozenset[int]:
        return frozenset(self._synced)

    # -- snapshots --

    def canonical(self):
        return (self.zone, tuple(sorted((k, v, ver) for k, (v, ver) in self._entries.items())))

    def snapshot(self) -> bytes:
        return codec.encode(self)

    def copy(self) -> "StateDB":
        db = StateDB(self.zone, self.default)
        db._entries = dict(self._entries)
        db._origins = dict(self._origins)
        db._acc = self._acc
        db._synced = set(self._synced)
        return db

    @classmethod
    def from_entries(cls, zone, entries, synced=()) -> "StateDB":
        db = cls(zone)
        for key, value, version in entries:
            db._put(key, value, version, GENESIS_ORIGIN)
        db._synced = set(synced)
        return db

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.snapshot())

    @classmethod
    def load(cls, path) -> "StateDB":
        with open(path, "rb") as fh:
            name, (zone, rows) = codec.decode(fh.read())
        if name != "StateDB":
            raise ValueError(f"not a state snapshot: {name}")
        entries = [(k, v, Version(*ver[1])) for k, v, ver in rows]
        return cls.from_entries(zone, entries)
