import dataclasses

import pytest

from hiershard.codec import ZERO_DIGEST
from hiershard.core import GLOBAL, Operation, SignatureRegistry, Transaction, TxType, Version, account_key
from hiershard.localchain import (
    Defer,
    Endorsement,
    LocalProposer,
    LocalValidator,
    Reject,
    Rejected,
    endorse_subject,
    form_local_commit_cert,
)
from hiershard.statedb import StateDB, SyncEntry

GENESIS = [(account_key(z, i), 1000) for z in range(2) for i in range(6)]


def proposer(batch=3):
    return LocalProposer(0, StateDB.genesis(GENESIS, 0), batch)


def validator():
    return LocalValidator(0, StateDB.genesis(GENESIS, 0))


def pay(txid, a, b, amount=10, za=0, zb=0):
    return Transaction(txid, Operation("send_payment", (account_key(za, a), account_key(zb, b)), amount), 0, 0)


def no_sync(k):
    return None


def test_local_transfer_executes_speculatively():
    p = proposer()
    done = p.handle_client_tx(pay("t1", 0, 1, 25))
    assert done.is_local and done.read_set and done.write_set
    assert p.db.get_state(account_key(0, 0))[0] == 975
    assert p.db.get_state(account_key(0, 1))[0] == 1025


def test_cross_zone_transfer_queued_without_rwset():
    p = proposer()
    done = p.handle_client_tx(pay("g1", 0, 1, zb=1))
    assert done.tx_type == GLOBAL and not done.read_set and not done.write_set
    assert p.db.get_state(account_key(0, 0))[0] == 1000


def test_unknown_account_rejected():
    with pytest.raises(Rejected):
        proposer().handle_client_tx(pay("t1", 0, 99))


def test_fifo_batching_cuts_at_batch_size():
    p = proposer(batch=3)
    blocks = []
    for i in range(4):
        p.handle_client_tx(pay(f"t{i + 1}", i % 6, (i + 1) % 6))
        if p.batch_full():
            blocks.append(p.propose_local_block())
    assert [t.txid for t in blocks[0].txs] == ["t1", "t2", "t3"]
    assert [t.txid for t in p.open.txs] == ["t4"]


def test_consecutive_blocks_chain():
    p = proposer(batch=1)
    blocks = []
    for i in range(3):
        p.handle_client_tx(pay(f"t{i}", i, i + 1))
        blocks.append(p.propose_local_block())
    assert [b.number for b in blocks] == [1, 2, 3]
    assert blocks[0].prev_hash == ZERO_DIGEST
    assert all(b.prev_hash == a.hash for a, b in zip(blocks, blocks[1:]))


def test_nothing_to_cut():
    assert proposer().propose_local_block() is None


def test_honest_proposal_validates_to_identical_state():
    p, v = proposer(batch=3), validator()
    for i in range(3):
        p.handle_client_tx(pay(f"t{i}", i, 5 - i, 7 * (i + 1)))
    block = p.propose_local_block()
    staged = v.validate_local_proposal(block, no_sync)
    assert not isinstance(staged, Reject)
    v.commit(block)
    assert v.db.digest == p.db.digest and v.height == 1 and v.head_hash == block.hash


def test_flipped_write_value_rejected():
    p, v = proposer(batch=1), validator()
    p.handle_client_tx(pay("t1", 0, 1))
    block = p.propose_local_block()
    t = block.txs[0]
    (key, value), *rest = t.write_set
    bad = dataclasses.replace(block, txs=(dataclasses.replace(t, write_set=((key, value + 1), *rest)),))
    assert v.validate_local_proposal(bad, no_sync) == Reject("rwset-mismatch")


def test_global_labelled_local_rejected():
    p, v = proposer(batch=1), validator()
    p.handle_client_tx(pay("g", 0, 1, zb=1))
    block = p.propose_local_block()
    lying = dataclasses.replace(block, txs=(dataclasses.replace(block.txs[0], tx_type=TxType.local(0)),))
    assert v.validate_local_proposal(lying, no_sync) == Reject("misclassified")


def test_gap_ahead_defers_and_stale_number_rejects():
    p, v = proposer(batch=1), validator()
    blocks = []
    for i in range(2):
        p.handle_client_tx(pay(f"t{i}", i, i + 1))
        blocks.append(p.propose_local_block())
    with pytest.raises(Defer):
        v.validate_local_proposal(blocks[1], no_sync)
    v.validate_local_proposal(blocks[0], no_sync)
    v.commit(blocks[0])
    assert v.validate_local_proposal(blocks[0], no_sync) == Reject("gap")


def test_missing_sync_payload_defers():
    p, v = proposer(batch=1), validator()
    p.queue_sync(1, [SyncEntry("g", account_key(0, 3), 500, Version(1, 0))])
    p.handle_client_tx(pay("t", 3, 4))
    block = p.propose_local_block()
    assert block.syncs == (1,)
    with pytest.raises(Defer):
        v.validate_local_proposal(block, no_sync)
    payload = {1: [SyncEntry("g", account_key(0, 3), 500, Version(1, 0))]}
    v.validate_local_proposal(block, payload.get)
    v.commit(block)
    assert v.db.digest == p.db.digest
    assert v.db.get_state(account_key(0, 3))[0] == 490


def _endorsements(reg, digest_by_member):
    return [Endorsement(0, 1, d, reg.sign(m, endorse_subject(d))) for m, d in digest_by_member.items()]


def test_commit_cert_with_three_endorsements():
    reg = SignatureRegistry()
    d = b"\x01" * 32
    cert = form_local_commit_cert(_endorsements(reg, {"L0.0": d, "L0.1": d, "L0.2": d}),
                                  ["L0.0", "L0.1", "L0.2", "L0.3"], 3, reg)
    assert cert is not None and sorted(cert.signer_ids()) == ["L0.0", "L0.1", "L0.2"]


def test_commit_cert_below_quorum():
    reg = SignatureRegistry()
    d = b"\x01" * 32
    assert form_local_commit_cert(_endorsements(reg, {"L0.0": d, "L0.1": d}),
                                  ["L0.0", "L0.1", "L0.2", "L0.3"], 3, reg) is None


def test_commit_cert_split_digests():
    reg = SignatureRegistry()
    a, b = b"\x01" * 32, b"\x02" * 32
    ends = _endorsements(reg, {"L0.0": a, "L0.1": a, "L0.2": b, "L0.3": b})
    assert form_local_commit_cert(ends, ["L0.0", "L0.1", "L0.2", "L0.3"], 3, reg) is None


def test_commit_cert_ignores_outsiders_and_forgeries():
    reg = SignatureRegistry()
    d = b"\x01" * 32
    ends = _endorsements(reg, {"L0.0": d, "L0.1": d, "L1.0": d})
    ends.append(Endorsement(0, 1, d, reg.sign("L0.2", endorse_subject(b"\x03" * 32))))
    assert form_local_commit_cert(ends, ["L0.0", "L0.1", "L0.2", "L0.3"], 3, reg) is None
