import pytest
from hypothesis import given, strategies as st

from hiershard import codec
from hiershard.core import (
    GLOBAL,
    CertificateError,
    ClassificationError,
    LocalBlock,
    Operation,
    SchemaError,
    SignatureRegistry,
    Topology,
    Transaction,
    TxType,
    Version,
    account_key,
    check_certificate,
    certificate_ok,
    classify_transaction,
    make_certificate,
    ownership,
    speculative_version,
    subject,
)
from hiershard.workload import WorkloadConfig, flatten, generate_schedule

from oracles import brute_force_intersection, min_intersecting_quorum


def tx(txid, *keys, zone=0, name="send_payment", amount=1):
    return Transaction(txid, Operation(name, tuple(keys), amount), zone, 0)


# -- digests -------------------------------------------------------------------

def test_digest_deterministic():
    assert codec.compute_digest(b"abc") == codec.compute_digest(b"abc")


def test_digest_empty_vs_zero_byte():
    assert codec.compute_digest(b"") != codec.compute_digest(b"\x00")


def _block():
    return LocalBlock(zone=1, number=3, prev_hash=codec.ZERO_DIGEST,
                      txs=(tx("t1", account_key(1, 0), account_key(1, 1), zone=1),))


def test_local_block_digest_survives_reserialization():
    a, b = _block(), _block()
    first, second = codec.encode(a), codec.encode(b)
    assert first == second
    assert codec.compute_digest(first) == a.hash == b.hash
    name, tree = codec.decode(first)
    assert name == "LocalBlock" and tree[:2] == (1, 3)


primitives = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text() | st.binary(),
    lambda inner: st.lists(inner, max_size=4).map(tuple) | st.dictionaries(st.text(max_size=4), inner, max_size=4),
    max_leaves=20,
)


@given(primitives)
def test_codec_round_trip(obj):
    assert codec.decode(codec.encode(obj)) == obj


@given(primitives, primitives)
def test_codec_injective_on_distinct_values(a, b):
    if a != b:
        assert codec.encode(a) != codec.encode(b)


def test_dict_encoding_ignores_insertion_order():
    assert codec.encode({"a": 1, "b": 2}) == codec.encode({"b": 2, "a": 1})


# -- ownership and classification ---------------------------------------------

def test_ownership_prefix():
    assert ownership("z03/acct/000042") == 3


def test_ownership_malformed():
    with pytest.raises(SchemaError):
        ownership("badkey")


def test_ownership_of_generated_keys():
    cfg = WorkloadConfig(zones=5, accounts_per_zone=200, global_ratio=0.3, duration_s=2)
    for t in flatten(generate_schedule(cfg)):
        zones = {ownership(k) for k in t.op.keys}
        if len(zones) == 1:
            assert zones == {t.submit_zone}
        for i in range(0, 200, 37):
            assert ownership(account_key(t.submit_zone, i)) == t.submit_zone


def test_classify_local():
    assert classify_transaction(tx("a", account_key(1, 0), account_key(1, 2)), 1) == TxType.local(1)


def test_classify_cross_zone():
    assert classify_transaction(tx("a", account_key(1, 0), account_key(2, 2)), 1) == GLOBAL


def test_classify_remote_shard():
    assert classify_transaction(tx("a", account_key(2, 0), account_key(2, 1)), 1) == GLOBAL


def test_classify_needs_keys():
    with pytest.raises(ClassificationError):
        classify_transaction(Transaction("x", Operation("send_payment", ()), 0, 0), 0)


# -- versions ------------------------------------------------------------------

@given(st.integers(0, 50), st.integers(1, 500), st.integers(0, 999), st.integers(0, 10**6))
def test_speculative_versions_sort_between_main_blocks(epoch, number, slot, seq):
    v = speculative_version(epoch, number, slot)
    assert Version(epoch, seq) < v < Version(epoch + 1, 0)


@given(st.integers(0, 50), st.integers(1, 500), st.integers(0, 999))
def test_speculative_versions_increase_with_position(epoch, number, slot):
    v = speculative_version(epoch, number, slot)
    assert v < speculative_version(epoch, number, slot + 1) < speculative_version(epoch, number + 1, 0)


# -- topology and quorums --------------------------------------------------------

@pytest.mark.parametrize("zones", [1, 3, 4, 5, 6, 7, 10, 12])
def test_full_quorum_is_minimal_intersecting(zones):
    topo = Topology.build(zones)
    assert topo.f_full == (zones - 1) // 3
    assert topo.full_quorum == min_intersecting_quorum(zones, topo.f_full)


@pytest.mark.parametrize("zones", [4, 5, 7])
def test_full_quorum_overlap_by_enumeration(zones):
    topo = Topology.build(zones)
    assert brute_force_intersection(zones, topo.full_quorum) >= topo.f_full + 1
    assert brute_force_intersection(zones, topo.full_quorum - 1) < topo.f_full + 1


def test_quorums_at_four_zones():
    topo = Topology.build(4)
    assert (topo.f_full, topo.full_quorum, topo.commit_votes, topo.proc_quorum) == (1, 3, 2, 2)
    assert topo.local_quorum == 3
    assert len(topo.local_members[0]) == 4


def test_topology_rejects_too_many_faults():
    with pytest.raises(ValueError):
        Topology.build(3, f_full=1)


def test_member_ids_and_zone_lookup():
    topo = Topology.build(4, f_local=1)
    assert topo.full_members[2] == "F2" and topo.standbys[2] == "S2"
    assert topo.local_members[3] == ("L3.0", "L3.1", "L3.2", "L3.3")
    assert [topo.zone_of(m) for m in ("F2", "S1", "L3.2")] == [2, 1, 3]


# -- certificates ------------------------------------------------------------------

def test_certificate_quorum_and_forgery():
    reg = SignatureRegistry()
    subj = subject("x", 1)
    sigs = [reg.sign(m, subj) for m in ("F0", "F1", "F2")]
    cert = make_certificate("k", subj, sigs, 3)
    assert certificate_ok(cert, reg, {"F0", "F1", "F2", "F3"}, 3, "k", subj)
    assert not certificate_ok(cert, reg, {"F0", "F1", "F2", "F3"}, 3, "k", subject("x", 2))
    assert not certificate_ok(cert, reg, {"F0", "F1"}, 3, "k", subj)
    with pytest.raises(CertificateError):
        check_certificate(make_certificate("k", subj, sigs[:2], 2), reg, {"F0", "F1", "F2"}, 3)
