from hypothesis import given, strategies as st

from hiershard.audit import (
    AVAIL,
    PROC,
    AuditConfig,
    AuditTracker,
    ViewChangeCollector,
    deposition_deadline,
    viewchange_subject,
)
from hiershard.core import MS, SignatureRegistry
from hiershard.experiment import run_experiment

from helpers import make_config, violations, withhold

CFG = AuditConfig(delta_sync=100 * MS, delta_gst=1000 * MS)


def tracker():
    return AuditTracker("L0.0", CFG)


@given(st.integers(1, 10**7), st.integers(1, 10**8))
def test_budgets_are_multiples_of_delta(delta, gst):
    c = AuditConfig(delta, max(gst, delta))
    assert (c.avail, c.inclusion, c.consensus, c.proc_cert) == (3 * delta, 3 * delta, 4 * delta, 2 * delta)
    assert c.proc == 6 * delta and c.end_to_end == 9 * delta


def test_avail_deadline_from_local_commit():
    assert tracker().start(1, AVAIL, now=0).deadline == 300 * MS


def test_proc_deadline_from_avail_receipt():
    assert tracker().start(1, PROC, now=250 * MS).deadline == 250 * MS + 600 * MS


def test_certificate_before_deadline_cancels_timer():
    t = tracker()
    t.start(1, AVAIL, 0)
    assert t.satisfy(1, AVAIL, 200 * MS)
    assert t.expire(1, AVAIL, 300 * MS) is None
    assert not t.pending and not t.timers
    assert [r.outcome for r in t.log] == ["ok"]


def test_timeout_moves_block_to_pending_with_gst_deadline():
    t = tracker()
    t.start(4, AVAIL, 0)
    assert t.expire(4, AVAIL, 299 * MS) is None  # too early
    entry = t.expire(4, AVAIL, 300 * MS)
    assert entry.gst_deadline == 1300 * MS and 4 in t.pending
    assert not t.gst_expired(4, 1299 * MS) and t.gst_expired(4, 1300 * MS)


def test_certificate_during_gst_window_resumes():
    t = tracker()
    t.start(4, AVAIL, 0)
    t.expire(4, AVAIL, 300 * MS)
    assert t.satisfy(4, AVAIL, 900 * MS)
    assert not t.pending and not t.gst_expired(4, 2000 * MS) and not t.faulted
    assert [r.outcome for r in t.log] == ["gst-wait", "ok"]


def test_wrong_phase_certificate_ignored():
    t = tracker()
    t.start(1, PROC, 0)
    assert not t.satisfy(1, AVAIL, 10)
    assert 1 in t.timers


def test_several_pending_blocks_share_one_fault_conclusion():
    t = tracker()
    for n in (1, 2, 3):
        t.start(n, AVAIL, 0)
        t.expire(n, AVAIL, 300 * MS)
    fired = [t.conclude_fault(n, AVAIL, 1300 * MS) for n in (1, 2, 3)]
    assert fired == [True, False, False]
    assert [r.outcome for r in t.log].count("fault") == 3


def test_new_view_rearms_outstanding_entries():
    t = tracker()
    t.start(1, AVAIL, 0)
    t.start(2, PROC, 0)
    t.expire(1, AVAIL, 300 * MS)
    t.conclude_fault(1, AVAIL, 1300 * MS)
    rearmed = t.reset_for_new_view(2000 * MS)
    assert [(e.number, e.phase, e.deadline) for e in rearmed] == [
        (1, AVAIL, 2300 * MS), (2, PROC, 2600 * MS)]
    assert not t.faulted and not t.pending


def test_deposition_deadline_examples():
    # avail phase: 300 + GST 1000 + view change 200
    assert deposition_deadline(CFG, AVAIL, 200 * MS) == 1500 * MS
    # proc phase: 300 + 600 + 1000 + 200
    assert deposition_deadline(CFG, PROC, 200 * MS) == 2100 * MS


# -- view-change quorum ---------------------------------------------------------

LOCALS = ["L0.0", "L0.1", "L0.2", "L0.3"]


def test_view_change_needs_quorum_of_conclusions():
    reg = SignatureRegistry()
    c = ViewChangeCollector(zone=0, quorum=3)
    subj = viewchange_subject(0, 0)
    assert not c.add(0, reg.sign("L0.0", subj), reg, LOCALS)
    assert not c.add(0, reg.sign("L0.1", subj), reg, LOCALS)
    assert c.add(0, reg.sign("L0.2", subj), reg, LOCALS)
    assert not c.add(0, reg.sign("L0.3", subj), reg, LOCALS)  # fires once


def test_single_false_accusation_stays_below_quorum():
    reg = SignatureRegistry()
    c = ViewChangeCollector(zone=0, quorum=3)
    sig = reg.sign("L0.3", viewchange_subject(0, 0))
    assert not any(c.add(0, sig, reg, LOCALS) for _ in range(5))
    assert len(c.votes) == 1


def test_collector_rejects_outsiders_stale_views_and_bad_signatures():
    reg = SignatureRegistry()
    c = ViewChangeCollector(zone=0, quorum=1)
    assert not c.add(0, reg.sign("L1.0", viewchange_subject(0, 0)), reg, LOCALS)
    assert not c.add(1, reg.sign("L0.0", viewchange_subject(0, 1)), reg, LOCALS)
    assert not c.add(0, reg.sign("L0.0", viewchange_subject(1, 0)), reg, LOCALS)
    assert c.add(0, reg.sign("L0.0", viewchange_subject(0, 0)), reg, LOCALS)


# -- in simulation --------------------------------------------------------------

def test_withholding_full_member_is_deposed_and_zone_recovers():
    run = run_experiment(make_config(zones=4, seed=2, faults=[withhold("F1", 300)]))
    vcs = run.env.obs.view_changes
    assert [vc["zone"] for vc in vcs] == [1] and vcs[0]["old"] == "F1"
    assert vcs[0]["new"] == run.topo.standbys[1]
    assert run.standbys[1].serving
    # validity covers the blocks that were pending at deposition
    assert violations(run) == {}
    assert run.report.unresolved == 0


def test_late_but_delivered_messages_cause_no_view_change():
    cfg = make_config(zones=4, seed=1, delta_gst_s=2.0).replace(async_windows=((0, 2000 * MS),))
    run = run_experiment(cfg)
    assert run.env.obs.view_changes == []
    assert violations(run) == {}
