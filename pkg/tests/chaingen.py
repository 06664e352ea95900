"""Random main-block sequences built from real local proposers.

Proposers execute speculatively, cut blocks, and receive sync entries with a
random lag, so stale reads (and hence local aborts) arise the same way they do
in a full run. Each main block takes a random prefix of every zone's pending
blocks and interleaves them randomly while keeping per-zone order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from hiershard.core import Operation, Transaction, account_key
from hiershard.localchain import LocalProposer, Rejected
from hiershard.processing import MainBlock, MainLedger, process_main_block
from hiershard.statedb import StateDB

from oracles import SerialOracle

OPS = ("send_payment", "send_payment", "deposit_checking", "amalgamate")


@dataclass
class Chain:
    zones: int
    genesis: list
    proposers: list
    blocks: list = field(default_factory=list)  # MainBlock sequence
    results: list = field(default_factory=list)
    ledger: MainLedger = None
    submitted: int = 0


def _random_tx(rng: random.Random, zones: int, accounts: int, txid: str, zone: int, g: float):
    name = rng.choice(OPS)
    a = rng.randrange(accounts)
    if name == "deposit_checking":
        keys = (account_key(zone, a),)
    else:
        other_zone = rng.choice([z for z in range(zones) if z != zone]) if rng.random() < g and zones > 1 else zone
        b = rng.randrange(accounts)
        if other_zone == zone and b == a:
            b = (a + 1) % accounts
        keys = (account_key(zone, a), account_key(other_zone, b))
    return Transaction(txid, Operation(name, keys, rng.randint(1, 60)), zone, 0)


def build_chain(seed: int, zones: int, n_txs: int, scheduling: bool, accounts: int = 12,
                g: float = 0.3, batch: int = 6, max_lag: int = 2) -> Chain:
    rng = random.Random(seed)
    genesis = [(account_key(z, i), 200) for z in range(zones) for i in range(accounts)]
    props = [LocalProposer(z, StateDB.genesis(genesis, z), batch) for z in range(zones)]
    chain = Chain(zones, genesis, props, ledger=MainLedger(StateDB.genesis(genesis), zones))
    pending = [[] for _ in range(zones)]
    undelivered = []  # (deliver_at_k, k, zone, entries), in k order
    n = 0

    def deliver(k_now, force=False):
        while undelivered and (force or undelivered[0][0] <= k_now):
            _, k, z, entries = undelivered.pop(0)
            props[z].queue_sync(k, entries)

    while n < n_txs or any(pending) or any(p.has_open_content() for p in props):
        for _ in range(rng.randint(0, 3 * zones)):
            if n >= n_txs:
                break
            z = rng.randrange(zones)
            try:
                props[z].handle_client_tx(_random_tx(rng, zones, accounts, f"t{n}", z, g))
                n += 1
            except Rejected:
                n += 1
        for z, p in enumerate(props):
            if p.batch_full() or (p.has_open_content() and (rng.random() < 0.3 or n >= n_txs)):
                pending[z].append(p.propose_local_block())
        picked = []
        for z in range(zones):
            take = len(pending[z]) if n >= n_txs else rng.randint(0, len(pending[z]))
            picked.append(pending[z][:take])
            pending[z] = pending[z][take:]
        order = []
        queues = [list(q) for q in picked if q]
        while queues:
            q = rng.choice(queues)
            order.append(q.pop(0))
            queues = [q for q in queues if q]
        if not order:
            deliver(len(chain.blocks), force=n >= n_txs)
            continue
        k = chain.ledger.k + 1
        mb = MainBlock(k, chain.ledger.head, tuple(b.header() for b in order), tuple(order))
        res = process_main_block(chain.ledger, mb, scheduling)
        chain.blocks.append(mb)
        chain.results.append(res)
        lag = 0 if n >= n_txs else rng.randint(0, max_lag)
        for z in range(zones):
            undelivered.append((k + lag, k, z, res.ents.for_zone(z)))
        undelivered.sort(key=lambda u: (u[1], u[2]))
        deliver(k, force=n >= n_txs)
    deliver(chain.ledger.k, force=True)
    chain.submitted = n
    return chain


def replay_oracle(chain: Chain, scheduling: bool) -> SerialOracle:
    db = StateDB.genesis(chain.genesis)
    oracle = SerialOracle({k: v for k, v in db.items()}, chain.zones)
    for mb in chain.blocks:
        oracle.process(mb.k, mb.blocks, scheduling)
    return oracle


def reprocess_ledger(chain: Chain, scheduling: bool) -> MainLedger:
    ledger = MainLedger(StateDB.genesis(chain.genesis), chain.zones)
    for mb in chain.blocks:
        process_main_block(ledger, mb, scheduling)
    return ledger
