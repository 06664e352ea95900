import dataclasses

import pytest
from hypothesis import given, strategies as st

from hiershard.codec import ZERO_DIGEST
from hiershard.core import LocalBlock, make_certificate
from hiershard.mempool import ZoneMempool, check_vertex

from dagutil import MEMBERS, DagBuilder


def blocks(zone, n):
    out, prev = [], ZERO_DIGEST
    for i in range(1, n + 1):
        b = LocalBlock(zone, i, prev, ())
        prev = b.hash
        out.append(b)
    return out


def cert():
    return make_certificate("cert-avail", b"\x00" * 32, (), 3)


def test_candidates_start_at_next():
    m = ZoneMempool(0, next_number=5)
    for b in blocks(0, 7)[4:]:
        m.store(b)
    m.mark_available(6, cert())
    m.mark_available(7, cert())
    m.mark_available(5, cert())
    assert [h.number for h, _ in m.build_candidates(5)] == [5, 6, 7]
    assert m.next() == 8


def test_out_of_order_cert_is_deferred_then_released():
    m = ZoneMempool(0, next_number=5)
    for b in blocks(0, 6)[4:]:
        m.store(b)
    m.mark_available(6, cert())
    assert m.build_candidates(6) == []
    m.mark_available(5, cert())
    assert [h.number for h, _ in m.build_candidates(5)] == [5, 6]


@given(st.permutations(list(range(1, 13))))
def test_candidates_are_gap_free_for_any_arrival_order(order):
    m = ZoneMempool(0)
    for b in blocks(0, 12):
        m.store(b)
    emitted = []
    for n in order:
        m.mark_available(n, cert())
        emitted += [h.number for h, _ in m.build_candidates(n)]
    assert emitted == list(range(1, 13))


def test_store_refuses_foreign_zone_and_duplicates():
    m = ZoneMempool(0)
    b = blocks(0, 1)[0]
    assert m.store(b) and not m.store(b)
    with pytest.raises(ValueError):
        m.store(blocks(1, 1)[0])


# -- vertex checks ---------------------------------------------------------------

def _round1(d: DagBuilder):
    return [d.vertex(m, 1, blocks=1) for m in MEMBERS]


def _check(d, v, view):
    return check_vertex(v, view, MEMBERS, MEMBERS, int(v.creator[1:]), 3, 40, d.registry)


def test_honest_vertex_accepted():
    d = DagBuilder()
    _round1(d)
    view = d.view()
    v = d.vertex("F0", 2, parents=[(1, m) for m in MEMBERS[:3]], blocks=2)
    assert _check(d, v, view) is None


def test_vertex_skipping_a_block_rejected():
    d = DagBuilder()
    _round1(d)
    view = d.view()
    # F1 already proposed block 1; proposing 3 before 2 breaks the local order
    v = d.vertex("F1", 2, parents=[(1, m) for m in MEMBERS[:3]], digests=[d.header(1, 3), d.header(1, 2)])
    assert _check(d, v, view) == "order"


def test_vertex_with_too_few_parents_or_forged_cert():
    d = DagBuilder()
    _round1(d)
    view = d.view()
    v = d.vertex("F2", 2, parents=[(1, "F0"), (1, "F1")])
    assert _check(d, v, view) == "too-few-parents"
    good = d.vertex("F2", 2, parents=[(1, m) for m in MEMBERS[:3]], blocks=1)
    forged = dataclasses.replace(good, avail_certs=(make_certificate("cert-avail", b"\x01" * 32, (), 3),))
    assert _check(d, forged, view) == "bad-avail-cert"


def test_digest_cap_enforced():
    d = DagBuilder()
    v = d.vertex("F0", 1, blocks=41)
    assert check_vertex(v, d.view([]), MEMBERS, MEMBERS, 0, 3, 40, d.registry) == "too-many-digests"
    v = d.vertex("F1", 1, blocks=40)
    assert check_vertex(v, d.view([]), MEMBERS, MEMBERS, 1, 3, 40, d.registry) is None


def test_quorum_of_certified_vertices_completes_a_round():
    d = DagBuilder()
    _round1(d)
    view = d.view([(1, m) for m in MEMBERS[:2]])
    assert view.count(1) == 2 < 3
    view.include(d.vertices[(1, "F2")], d.certs[(1, "F2")])
    assert view.count(1) == 3 and view.max_round == 1


def test_duplicate_inclusion_is_idempotent():
    d = DagBuilder()
    _round1(d)
    view = d.view()
    assert not view.include(d.vertices[(1, "F0")], d.certs[(1, "F0")])
    assert len(view) == 4


def test_unknown_parent_held_until_fetched():
    d = DagBuilder()
    _round1(d)
    child = d.vertex("F0", 2, parents=[(1, m) for m in MEMBERS[:3]])
    view = d.view([(1, "F0"), (1, "F1")])
    assert [r.vid for r in view.missing_parents(child)] == [(1, "F2")]
    with pytest.raises(KeyError):
        view.include(child, d.certs[child.vid])
    view.include(d.vertices[(1, "F2")], d.certs[(1, "F2")])
    assert view.include(child, d.certs[child.vid])
    assert view.history_high(child) == (1, 1, 1, 0)
