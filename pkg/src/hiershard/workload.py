"""SmallBank-style transaction generation with a configurable global ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import smallbank
from .codec import digest_of
from .core import SECOND, Operation, Transaction, account_key

TOTAL_ACCOUNTS = 300_000
TWO_KEY_OPS = (smallbank.SEND_PAYMENT, smallbank.AMALGAMATE)


@dataclass(frozen=True)
class WorkloadConfig:
    zones: int = 3
    accounts_per_zone: int = 0  # 0 -> TOTAL_ACCOUNTS spread over zones
    global_ratio: float = 0.0
    send_rate: float = 200.0  # tx/s summed over all clients
    duration_s: float = 3.0
    clients_per_zone: int = 1
    seed: int = 0
    initial_balance: int = 10_000
    max_amount: int = 100
    hot_accounts: int = 0  # per zone; 0 disables the hot set
    hot_prob: float = 0.0
    tx_size_bytes: int = 2890
    retry_s: float = 2.0  # client resubmits a tx still unresolved after this long; 0 disables

    def __post_init__(self) -> None:
        if not 0.0 <= self.global_ratio <= 1.0:
            raise ValueError("global_ratio must lie in [0, 1]")
        if self.global_ratio > 0 and self.zones < 2:
            raise ValueError("global transactions need at least two zones")
        if self.send_rate <= 0 or self.duration_s <= 0:
            raise ValueError("send_rate and duration_s must be positive")
        if self.clients_per_zone < 1:
            raise ValueError("clients_per_zone must be >= 1")
        if not 0.0 <= self.hot_prob <= 1.0:
            raise ValueError("hot_prob must lie in [0, 1]")
        if self.hot_accounts > self.accounts:
            raise ValueError("hot set larger than the zone")

    @property
    def accounts(self) -> int:
        return self.accounts_per_zone or TOTAL_ACCOUNTS // self.zones

    @property
    def total_clients(self) -> int:
        return self.zones * self.clients_per_zone


def genesis_balances(cfg: WorkloadConfig) -> list[tuple[str, int]]:
    return [(account_key(z, i), cfg.initial_balance) for z in range(cfg.zones) for i in range(cfg.accounts)]


def _pick_account(rng: np.random.Generator, cfg: WorkloadConfig, zone: int, exclude: int = -1) -> int:
    while True:
        if cfg.hot_accounts and rng.random() < cfg.hot_prob:
            idx = int(rng.integers(cfg.hot_accounts))
        else:
            idx = int(rng.integers(cfg.accounts))
        if idx != exclude:
            return idx


def generate_tx(rng: np.random.Generator, cfg: WorkloadConfig, zone: int, txid: str, t: int) -> Transaction:
    """One SmallBank transaction submitted by a client of ``zone`` at time ``t``."""
    amount = int(rng.integers(1, cfg.max_amount + 1))
    if cfg.global_ratio and rng.random() < cfg.global_ratio:
        name = TWO_KEY_OPS[int(rng.integers(len(TWO_KEY_OPS)))]
        other = int(rng.integers(cfg.zones - 1))
        other += other >= zone
        keys = (account_key(zone, _pick_account(rng, cfg, zone)),
                account_key(other, _pick_account(rng, cfg, other)))
    else:
        name = smallbank.OPERATIONS[int(rng.integers(len(smallbank.OPERATIONS)))]
        a = _pick_account(rng, cfg, zone)
        if name == smallbank.DEPOSIT_CHECKING:
            keys = (account_key(zone, a),)
        else:
            keys = (account_key(zone, a), account_key(zone, _pick_account(rng, cfg, zone, exclude=a)))
    if name == smallbank.AMALGAMATE:
        amount = 0
    return Transaction(txid, Operation(name, keys, amount), zone, t, size_bytes=cfg.tx_size_bytes)


def generate_schedule(cfg: WorkloadConfig) -> dict[tuple[int, int], list[tuple[int, Transaction]]]:
    """Per (zone, client) submission schedule; clients are interleaved so the
    aggregate rate is exactly ``send_rate``."""
    rng = np.random.default_rng(cfg.seed)
    n_clients = cfg.total_clients
    gap = SECOND / cfg.send_rate
    total = int(cfg.send_rate * cfg.duration_s)
    out: dict[tuple[int, int], list] = {(z, c): [] for z in range(cfg.zones) for c in range(cfg.clients_per_zone)}
    for i in range(total):
        slot = i % n_clients
        zone, client = slot % cfg.zones, slot // cfg.zones
        t = int(round(i * gap)) + 1
        tx = generate_tx(rng, cfg, zone, f"t{zone}.{client}.{i}", t)
        out[(zone, client)].append((t, tx))
    return out


def flatten(schedule) -> list[Transaction]:
    txs = [tx for entries in schedule.values() for _, tx in entries]
    return sorted(txs, key=lambda tx: (tx.client_time, tx.txid))


def is_global(tx: Transaction) -> bool:
    return len({k.split("/")[0] for k in tx.op.keys}) > 1


def global_fraction(txs) -> float:
    txs = list(txs)
    if not txs:
        return 0.0
    return float(np.mean([is_global(tx) for tx in txs]))


def workload_digest(schedule) -> str:
    return digest_of(tuple(tx.body() for tx in flatten(schedule))).hex()
