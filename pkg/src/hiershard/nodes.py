"""Simulated processes: full members (incl. standbys), local members, clients.

Protocol logic lives in the pure modules (localchain, mempool, consensus,
processing, audit, twopc); the classes here only sequence it over messages
and timers.
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Optional

from .audit import AVAIL, PROC, AuditConfig, AuditTracker, ViewChangeCollector, viewchange_subject
from .codec import Digest
from .consensus import Bullshark, CommitState, Membership
from .core import (
    BlockHeader,
    Certificate,
    LocalBlock,
    ProtocolConfig,
    Scheme,
    SignatureRegistry,
    Topology,
    Transaction,
    TwoPCApply,
    certificate_ok,
    classify_transaction,
    make_certificate,
    ownership,
    standby_id,
)
from .localchain import (
    LOCAL_COMMIT,
    Defer,
    Endorsement,
    LocalProposer,
    LocalValidator,
    Reject,
    Rejected,
    endorse_subject,
    form_local_commit_cert,
)
from .mempool import (
    CERT_AVAIL,
    CERT_INCLUSION,
    DagView,
    Vertex,
    VertexRef,
    ZoneMempool,
    ack_subject,
    check_vertex,
    vote_subject,
)
from .metrics import ABORTED, COMMITTED, UNRESOLVED, OutcomeLedger
from .processing import (
    MainBlock,
    MainLedger,
    MissingBlocks,
    ProcessingProof,
    ProcessResult,
    ProofPool,
    create_main_block,
    make_proof,
    process_main_block,
    zone_digest,
)
from .simnet import Message, Node, Simulator
from .statedb import StateDB
from .twopc import LockTable, TwoPCState, decision_subject

SMALL = 128
PROVABLE_REJECTS = frozenset({
    "rwset-mismatch", "misclassified", "global-with-rwset", "malformed-tx",
    "foreign-sync-key", "foreign-apply-key", "bad-apply-token", "wrong-zone",
})
# kinds a not-yet-installed standby holds back until its catch-up completes
MAIN_KINDS = frozenset({"REPL", "ACK", "VERTEX", "VOTE", "VCERT", "FETCH_V", "PROOF", "FETCH_B", "BLOCK"})


# -- shared run context ---------------------------------------------------------

@dataclass
class Observations:
    """Everything the invariant checker needs, recorded as the run unfolds."""

    commits: dict = field(default_factory=lambda: defaultdict(list))  # member -> [(k, tau)]
    includes: dict = field(default_factory=lambda: defaultdict(set))  # (round, creator) -> {(member, hash)}
    processed: dict = field(default_factory=dict)  # k -> ProcessResult (first honest)
    costs: dict = field(default_factory=lambda: defaultdict(dict))  # member -> {k: cost}
    main_values: dict = field(default_factory=dict)  # k -> {key: value}
    main_value_mismatch: list = field(default_factory=list)
    topdown_violations: list = field(default_factory=list)
    topdown_checks: int = 0
    evidence: list = field(default_factory=list)
    view_changes: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    rejects: list = field(default_factory=list)

    def record_processed(self, member: str, k: int, result: ProcessResult) -> None:
        self.costs[member][k] = result.cost
        if k not in self.processed:
            self.processed[k] = result
            self.main_values[k] = dict(result.final_values)
        elif self.main_values[k] != result.final_values:
            self.main_value_mismatch.append((member, k))


class Env:
    def __init__(self, sim: Simulator, topo: Topology, cfg: ProtocolConfig, genesis, deposits=None) -> None:
        self.sim = sim
        self.topo = topo
        self.cfg = cfg
        self.audit = AuditConfig(cfg.delta_sync, cfg.delta_gst)
        self.registry = SignatureRegistry()
        self.membership = Membership(topo.full_members)
        self.outcomes = OutcomeLedger(topo.f_local + 1)
        self.obs = Observations()
        self.genesis = list(genesis)
        self.leaders = {z: m for z, m in enumerate(topo.full_members)}
        self.nodes: dict[str, Node] = {}
        self.standby_used: set[int] = set()
        self.byzantine: set[str] = set()
        self.clients: dict[int, list] = defaultdict(list)

    @property
    def main_chain(self) -> bool:
        return self.cfg.scheme is not Scheme.PERFORMANCE

    def leader(self, zone: int) -> str:
        return self.leaders[zone]

    def coordinator(self) -> str:
        return self.leaders[0]

    def grant(self, zone: int, new_member: str) -> None:
        """Install ``new_member`` as zone's full member (instantaneous membership change)."""
        old = self.leaders[zone]
        rounds = [n.view.max_round for n in self.nodes.values() if isinstance(n, FullMember) and n.view is not None]
        eff = max(rounds, default=0) + 6
        if self.main_chain:
            self.membership.grant(zone, new_member, eff)
        self.sim.revoke(old)
        self.leaders[zone] = new_member
        self.standby_used.add(zone)
        self.obs.view_changes.append({"zone": zone, "time": self.sim.now, "old": old, "new": new_member,
                                      "effective_round": eff})
        for client in self.clients.get(zone, ()):
            client.reroute()


@dataclass(frozen=True)
class ProcMsg:
    k: int
    cert: Certificate
    proof: ProcessingProof
    ents: tuple
    aborted: tuple


@dataclass
class MainRecord:
    k: int
    block: MainBlock
    result: ProcessResult
    proof: ProcessingProof
    cert: Optional[Certificate] = None
    emitted: bool = False


@dataclass
class Snapshot:
    view: DagView
    commit_state: CommitState
    ledger: MainLedger
    records: dict
    commit_queue: list
    mempools: dict
    proof_certs: dict
    k: int


# -- full member ------------------------------------------------------------------

class FullMember(Node):
    def __init__(self, sim: Simulator, env: Env, node_id: str, zone: int, active: bool = True) -> None:
        super().__init__(sim, node_id)
        self.env = env
        env.nodes[node_id] = self
        self.zone = zone
        self.cfg = env.cfg
        self.topo = env.topo
        self.signer = env.registry.signer(node_id)
        self.locals = env.topo.local_members[zone]
        self.serving = active
        self.main_active = active and env.main_chain
        self.tx_buffer: list = []
        self.seen_txids: set[str] = set()
        self.held: list = []

        self.locks = LockTable()
        self.proposer: Optional[LocalProposer] = None
        if active:
            self._install_proposer(StateDB.genesis(env.genesis, zone), 1, None, 0)
        self.proposed: dict[int, LocalBlock] = {}
        self.endorsements: dict[int, dict] = defaultdict(dict)
        self.local_certified: dict[int, LocalBlock] = {}
        self.batch_timer = None

        self.view: Optional[DagView] = None
        if env.main_chain:
            self.mempools = {z: ZoneMempool(z) for z in range(env.topo.zones)}
            self.acks: dict[int, dict] = defaultdict(dict)
            self.avail_done: set[int] = set()
            self.candidates: deque = deque()
            self.view = DagView(env.topo.zones, env.topo.zone_of)
            self.consensus = Bullshark(self.view, env.membership, env.topo.commit_votes)
            self.seen: dict = {}
            self.voted: dict = {}
            self.vote_wait: dict = {}
            self.include_wait: dict = {}
            self.fetching: dict = {}
            self.fetch_timer = None
            self.my_pending: Optional[list] = None
            self.proposed_round = 0
            self.vertex_timer = None
            self.vertex_due = False
            self.content: set = set()
            self.commit_queue: deque = deque()
            self.block_wait: set = set()
            genesis_all = StateDB.genesis(env.genesis)
            self.ledger = MainLedger(genesis_all, env.topo.zones)
            self.busy_until = 0
            self.records: dict[int, MainRecord] = {}
            self.pool = ProofPool(env.topo.proc_quorum)
            self.next_proc = 1
            self.cert_timer = None
            self.block_timer = None
            self.missing_headers: list = []

        self.coordinator: Optional[TwoPCState] = TwoPCState() if zone == 0 else None
        self.decided_local: dict[str, bool] = {}
        self.applied_in: dict[str, int] = {}  # txid -> local block number carrying the apply
        self.decide_timers: dict = {}

        # standby role
        self.vc = ViewChangeCollector(zone, env.topo.local_quorum)
        self.catchup_digests: dict = {}
        self.snapshot: Optional[Snapshot] = None
        self.local_states: dict = {}
        self.catchup_done = False
        self.inherited: set[int] = set()

    # -- helpers --

    def sign(self, subj: Digest):
        return self.signer.sign(subj)

    def peers(self) -> list[str]:
        return [m for m in self.env.membership.current() if m != self.id]

    def members(self) -> tuple[str, ...]:
        return self.env.membership.current()

    def _install_proposer(self, db: StateDB, next_number: int, prev, epoch: int) -> None:
        kw = {} if prev is None else {"prev_hash": prev}
        self.proposer = LocalProposer(self.zone, db, self.cfg.local_block_batch_size, next_number,
                                      sync_epoch=epoch, **kw)
        self.proposer.is_locked = self.locks.is_locked
        self.proposer.on_applied = lambda ap: self.locks.release(ap.txid)

    def handle(self, src: str, msg: Message) -> None:
        if not self.main_active and msg.kind in MAIN_KINDS:
            if self.env.main_chain:
                self.held.append((src, msg))
            return
        super().handle(src, msg)

    # -- local chain leader --

    def on_TX(self, src: str, tx: Transaction) -> None:
        if not self.serving:
            self.tx_buffer.append(tx)
            return
        if tx.txid in self.seen_txids:
            return
        self.seen_txids.add(tx.txid)
        try:
            tx_type = classify_transaction(tx, self.zone)
        except Exception as exc:
            self.env.outcomes.reject(tx.txid, f"malformed: {exc}", self.now)
            return
        if not self.env.main_chain and not tx_type.is_local:
            self.send(self.env.coordinator(), "FWD", tx, tx.size_bytes)
            return
        try:
            self.proposer.handle_client_tx(tx)
        except Rejected as r:
            self.env.outcomes.reject(tx.txid, r.reason, self.now)
            return
        if self.proposer.batch_full():
            self._cut()
        else:
            self._arm_batch()

    def _arm_batch(self) -> None:
        if self.proposer is None or self.batch_timer is not None:
            return
        if self.proposer.has_open_content():
            self.batch_timer = self.set_timer(self.cfg.local_block_timeout, self._batch_fire)

    def _batch_fire(self) -> None:
        self.batch_timer = None
        self._cut()

    def _cut(self) -> None:
        self.cancel_timer(self.batch_timer)
        self.batch_timer = None
        block = self.proposer.propose_local_block()
        if block is not None:
            self.proposed[block.number] = block
            self.broadcast(self.locals, "PROPOSE", block, block.size_bytes())
        self._arm_batch()

    def on_ENDORSE(self, src: str, e: Endorsement) -> None:
        if e.zone != self.zone or e.sig.member != src or e.number in self.local_certified:
            return
        self.endorsements[e.number][src] = e
        block = self.proposed.get(e.number)
        if block is None or block.hash != e.block_hash:
            return
        cert = form_local_commit_cert(self.endorsements[e.number].values(), self.locals,
                                      self.topo.local_quorum, self.env.registry)
        if cert is not None and cert.subject == endorse_subject(block.hash):
            self._local_committed(block.with_cert(cert))

    def _local_committed(self, block: LocalBlock) -> None:
        self.local_certified[block.number] = block
        self.proposed.pop(block.number, None)
        self.endorsements.pop(block.number, None)
        if not self.env.main_chain:
            for ap in block.applies:
                self.applied_in[ap.txid] = block.number
                self.send(self.env.coordinator(), "DACK", (ap.txid, self.zone), SMALL)
            return
        self._distribute(block)

    def _distribute(self, block: LocalBlock) -> None:
        self.broadcast(self.members(), "REPL", block, block.size_bytes())

    # -- block distribution --

    def _accept_block(self, b: LocalBlock) -> bool:
        if not certificate_ok(b.local_cert, self.env.registry, self.topo.local_members[b.zone],
                              self.topo.local_quorum, LOCAL_COMMIT, endorse_subject(b.hash)):
            self.env.obs.evidence.append(("bad-local-cert", self.id, b.zone, b.number))
            return False
        mp = self.mempools[b.zone]
        existing = mp.blocks.get(b.number)
        if existing is not None:
            if existing.hash != b.hash:
                self.env.obs.evidence.append(("fork", self.id, b.zone, b.number))
                return False
            return True
        mp.store(b)
        if (b.zone, b.number) in self.block_wait:
            self.block_wait.discard((b.zone, b.number))
            self._process_commits()
        return True

    def on_REPL(self, src: str, b: LocalBlock) -> None:
        if self._accept_block(b):
            h = b.header()
            self.send(src, "ACK", (h, self.sign(ack_subject(h))), SMALL)

    def on_ACK(self, src: str, payload) -> None:
        header, sig = payload
        if header.zone != self.zone or sig.member != src:
            return
        if not self.env.registry.verify(sig, ack_subject(header)):
            return
        mp = self.mempools[self.zone]
        block = mp.blocks.get(header.number)
        if block is None or block.hash != header.digest:
            return
        acks = self.acks[header.number]
        acks[src] = sig
        if header.number in self.avail_done or len(acks) < self.topo.full_quorum:
            return
        cert = make_certificate(CERT_AVAIL, ack_subject(header), acks.values(), self.topo.full_quorum)
        self.avail_done.add(header.number)
        mp.mark_available(header.number, cert)
        self.broadcast(self.locals, "AVAIL", (header, cert), SMALL + 48 * len(cert.signers))
        self.candidates.extend(mp.build_candidates(header.number))
        self._maybe_propose()

    # -- DAG: proposing --

    def _quorum_round(self) -> int:
        r = self.view.max_round
        while r > 0 and self.view.count(r) < self.topo.full_quorum:
            r -= 1
        return r

    def _next_round(self) -> Optional[int]:
        q = self._quorum_round()
        p = self.proposed_round
        if p and q < p:
            return None
        r = q + 1
        if r < self.env.membership.first_round(self.id):
            return None
        if self.id not in self.env.membership.members_at(r):
            return None
        return r

    def _maybe_propose(self) -> None:
        if not self.main_active or self.my_pending is not None or not self.catchup_ready():
            return
        r = self._next_round()
        if r is None:
            return
        if self.candidates or self.content or self.vertex_due:
            self._propose(r)
        elif self.vertex_timer is None:
            self.vertex_timer = self.set_timer(self.cfg.max_vertex_delay, self._vertex_fire)

    def catchup_ready(self) -> bool:
        return self.serving

    def _vertex_fire(self) -> None:
        self.vertex_timer = None
        self.vertex_due = True
        self._maybe_propose()

    def _propose(self, r: int) -> None:
        self.cancel_timer(self.vertex_timer)
        self.vertex_timer = None
        self.vertex_due = False
        view = self.view
        parents, weak = [], []
        union = 0
        if r > 1:
            for vid in view.round_vertices(r - 1):
                node = view.node(vid)
                parents.append((node.vertex.ref(), node.cert))
                union |= node.history
            for vid in view.tips_outside(union, r - 1):
                node = view.node(vid)
                weak.append((node.vertex.ref(), node.cert))
        high = 0
        for ref, _ in parents + weak:
            high = max(high, view.node(ref.vid).zone_high[self.zone])
        while self.candidates and self.candidates[0][0].number <= high:
            self.candidates.popleft()
        digests, certs = [], []
        expected = high + 1
        while self.candidates and len(digests) < self.cfg.max_digests_per_vertex:
            h, c = self.candidates[0]
            if h.number != expected:
                break
            self.candidates.popleft()
            digests.append(h)
            certs.append(c)
            expected += 1
        v = Vertex(self.id, r, tuple(digests), tuple(certs), tuple(parents), tuple(weak))
        self.my_pending = [v, {}]
        self.seen[v.vid] = v.hash
        self.broadcast(self.members(), "VERTEX", v, v.size_bytes())

    # -- DAG: voting and inclusion --

    def on_VERTEX(self, src: str, v: Vertex) -> None:
        if src != v.creator:
            return
        prev = self.seen.get(v.vid)
        if prev is not None and prev != v.hash:
            self.env.obs.evidence.append(("equivocation", self.id, v.creator, v.round))
            return
        if v.vid in self.voted:
            self.send(src, "VOTE", (v.ref(), self.voted[v.vid]), SMALL)
            return
        self.seen[v.vid] = v.hash
        self._try_vote(v)

    def _try_vote(self, v: Vertex) -> None:
        missing = self.view.missing_parents(v)
        if missing:
            self.vote_wait[v.vid] = v
            self._fetch(missing, v.creator)
            return
        self.vote_wait.pop(v.vid, None)
        m = self.env.membership
        reason = check_vertex(v, self.view, m.members_at(v.round), m.ever(), self.topo.zone_of(v.creator),
                              self.topo.full_quorum, self.cfg.max_digests_per_vertex, self.env.registry)
        if reason is not None:
            self.env.obs.evidence.append(("vote-reject", self.id, v.creator, v.round, reason))
            return
        sig = self.sign(vote_subject(v.ref()))
        self.voted[v.vid] = sig
        self.send(v.creator, "VOTE", (v.ref(), sig), SMALL)

    def on_VOTE(self, src: str, payload) -> None:
        ref, sig = payload
        if self.my_pending is None or sig.member != src:
            return
        v, votes = self.my_pending
        if ref != v.ref() or not self.env.registry.verify(sig, vote_subject(ref)):
            return
        votes[src] = sig
        if len(votes) < self.topo.full_quorum:
            return
        cert = make_certificate(CERT_INCLUSION, vote_subject(ref), votes.values(), self.topo.full_quorum)
        self.my_pending = None
        self.proposed_round = v.round
        self.broadcast(self.peers(), "VCERT", (v, cert), v.size_bytes() + 48 * len(cert.signers))
        self._include(v, cert, None)

    def on_VCERT(self, src: str, payload) -> None:
        v, cert = payload
        if v.vid in self.view:
            return
        m = self.env.membership
        if v.creator not in m.members_at(v.round):
            return
        if not certificate_ok(cert, self.env.registry, m.ever(), self.topo.full_quorum, CERT_INCLUSION,
                              vote_subject(v.ref())):
            return
        self._include(v, cert, src)

    def _include(self, v: Vertex, cert: Certificate, src: Optional[str]) -> None:
        work = [(v, cert, src)]
        progressed = False
        while work:
            v, cert, src = work.pop()
            if v.vid in self.view:
                continue
            missing = self.view.missing_parents(v)
            if missing:
                self.include_wait[v.vid] = (v, cert)
                self._fetch(missing, src or v.creator)
                continue
            self.view.include(v, cert)
            progressed = True
            self.include_wait.pop(v.vid, None)
            self.fetching.pop(v.vid, None)
            self.env.obs.includes[v.vid].add((self.id, v.hash))
            if v.digests:
                self.content.add(v.vid)
            for vid, (w, c) in list(self.include_wait.items()):
                if not self.view.missing_parents(w):
                    work.append((w, c, None))
        if not progressed:
            return
        for vid, w in list(self.vote_wait.items()):
            if not self.view.missing_parents(w):
                self._try_vote(w)
        for c in self.consensus.step():
            self.env.obs.commits[self.id].append((c.k, c.tau))
            self.content.difference_update(c.vertices)
            self.commit_queue.append(c)
        self._process_commits()
        self._maybe_propose()

    def _fetch(self, refs, src: Optional[str]) -> None:
        for ref in refs:
            if ref.vid in self.fetching:
                continue
            self.fetching[ref.vid] = ref
            for dst in sorted({src, ref.creator} - {self.id, None}):
                self.send(dst, "FETCH_V", ref, SMALL)
        if self.fetching and self.fetch_timer is None:
            self.fetch_timer = self.set_timer(4 * self.cfg.delta_sync, self._fetch_retry)

    def _fetch_retry(self) -> None:
        self.fetch_timer = None
        for vid, ref in list(self.fetching.items()):
            if vid in self.view:
                del self.fetching[vid]
                continue
            self.broadcast(self.peers(), "FETCH_V", ref, SMALL)
        if self.fetching:
            self.fetch_timer = self.set_timer(4 * self.cfg.delta_sync, self._fetch_retry)

    def on_FETCH_V(self, src: str, ref: VertexRef) -> None:
        v = self.view.get(ref.vid)
        if v is not None and v.hash == ref.digest:
            cert = self.view.cert(ref.vid)
            self.send(src, "VCERT", (v, cert), v.size_bytes() + 48 * len(cert.signers))

    # -- main block processing --

    def _resolve(self, h: BlockHeader) -> Optional[LocalBlock]:
        return self.mempools[h.zone].get(h.digest)

    def _process_commits(self) -> None:
        while self.commit_queue:
            c = self.commit_queue[0]
            try:
                block = create_main_block(self._resolve, c.tau, c.k, self.ledger.head)
            except MissingBlocks as e:
                for h in e.headers:
                    if (h.zone, h.number) not in self.block_wait:
                        self.block_wait.add((h.zone, h.number))
                        self.broadcast(self.peers(), "FETCH_B", h, SMALL)
                self.missing_headers = e.headers
                if self.block_timer is None:
                    self.block_timer = self.set_timer(4 * self.cfg.delta_sync, self._fetch_blocks)
                return
            self.commit_queue.popleft()
            result = process_main_block(self.ledger, block, self.cfg.scheduling, self.cfg)
            rec = MainRecord(c.k, block, result, make_proof(block, result.ents))
            self.records[c.k] = rec
            self.pool.expect(c.k, rec.proof.subject)
            self.env.obs.record_processed(self.id, c.k, result)
            self.busy_until = max(self.now, self.busy_until) + result.cost
            self.set_timer(self.busy_until - self.now, self._emit_proof, c.k)

    def _fetch_blocks(self) -> None:
        self.block_timer = None
        if not self.commit_queue:
            return
        missing = [h for h in self.missing_headers if self._resolve(h) is None]
        if missing:
            for h in missing:
                self.broadcast(self.peers(), "FETCH_B", h, SMALL)
            self.block_timer = self.set_timer(4 * self.cfg.delta_sync, self._fetch_blocks)

    def on_FETCH_B(self, src: str, h: BlockHeader) -> None:
        b = self.mempools[h.zone].get(h.digest)
        if b is not None:
            self.send(src, "BLOCK", b, b.size_bytes())

    def on_BLOCK(self, src: str, b: LocalBlock) -> None:
        self._accept_block(b)

    def _emit_proof(self, k: int) -> None:
        rec = self.records[k]
        if rec.emitted:
            return
        rec.emitted = True
        sig = self.sign(rec.proof.subject)
        self.broadcast(self.peers(), "PROOF", (rec.proof, sig), SMALL + 48 * len(rec.proof.hdrs))
        self._add_proof(rec.proof, sig)

    def on_PROOF(self, src: str, payload) -> None:
        proof, sig = payload
        if sig.member != src or not self.env.registry.verify(sig, proof.subject):
            return
        self._add_proof(proof, sig)

    def _add_proof(self, proof: ProcessingProof, sig) -> None:
        self.pool.add(proof, sig)
        self._try_relay()

    def _try_relay(self) -> None:
        if not self.serving:
            return
        while True:
            k = self.next_proc
            rec = self.records.get(k)
            cert = self.pool.certs.get(k)
            if rec is None or cert is None or not rec.emitted:
                return
            if cert.subject != rec.proof.subject:
                self.env.obs.evidence.append(("proc-disagree", self.id, k))
                return
            rec.cert = cert
            self.next_proc += 1
            self._relay(rec, send=True, sync=True)

    def _relay(self, rec: MainRecord, send: bool, sync: bool) -> None:
        z = self.zone
        ents = rec.result.ents.for_zone(z)
        if send:
            msg = ProcMsg(rec.k, rec.cert, rec.proof, ents, rec.result.ents.aborted_in(z))
            size = SMALL + 48 * len(rec.cert.signers) + 48 * len(rec.proof.hdrs) + 80 * len(ents)
            self.broadcast(self.locals, "PROC", msg, size)
            if self.cfg.scheme is Scheme.AVAILABILITY:
                foreign = tuple(b for b in rec.block.blocks if b.zone != z)
                if foreign:
                    self.broadcast(self.locals, "BLOCKS", (rec.k, foreign), sum(b.size_bytes() for b in foreign))
        if sync and ents:
            self.proposer.queue_sync(rec.k, ents)
            self._arm_batch()

    def on_CERT_REQ(self, src: str, k: int) -> None:
        cert = self.pool.certs.get(k)
        if cert is not None:
            self.send(src, "CERT", (k, cert), SMALL + 48 * len(cert.signers))

    def on_CERT(self, src: str, payload) -> None:
        k, cert = payload
        rec = self.records.get(k)
        if rec is None or k in self.pool.certs or cert.subject != rec.proof.subject:
            return
        if certificate_ok(cert, self.env.registry, self.env.membership.ever(), self.topo.proc_quorum,
                          cert.kind, rec.proof.subject):
            self.pool.certs[k] = cert
            self._try_relay()

    # -- performance sharding: 2PC --

    def on_FWD(self, src: str, tx: Transaction) -> None:
        if tx.txid in self.coordinator.inflight:
            return
        st = self.coordinator.begin(tx, self.now)
        if any(z >= self.topo.zones for z in st.zones):
            if self.coordinator.timeout(tx.txid):
                self._send_decide(tx.txid)
            return
        for z in st.zones:
            keys = tuple(k for k in tx.keys() if ownership(k) == z)
            self.send(self.env.leader(z), "PREPARE", (tx.txid, keys), SMALL)
        self.set_timer(self.cfg.prepare_timeout, self._prepare_timeout, tx.txid)

    def _prepare_timeout(self, txid: str) -> None:
        if self.coordinator.timeout(txid):
            self._send_decide(txid)

    def on_PREPARE(self, src: str, payload) -> None:
        txid, keys = payload
        db = self.proposer.db
        ok = (txid not in self.decided_local and all(k in db for k in keys)
              and self.locks.try_lock(txid, keys))
        reads = {k: db.get_state(k) for k in keys} if ok else {}
        self.send(src, "PVOTE", (txid, self.zone, ok, reads), SMALL + 32 * len(reads))

    def on_PVOTE(self, src: str, payload) -> None:
        txid, zone, ok, reads = payload
        if self.coordinator.vote(txid, zone, ok, reads):
            self._send_decide(txid)

    def _send_decide(self, txid: str) -> None:
        st = self.coordinator.inflight[txid]
        if st.phase == "done":
            return
        commit = st.phase == "commit"
        for z in self.coordinator.unacked(txid):
            if z >= self.topo.zones:
                self.coordinator.ack(txid, z)
                continue
            writes = st.writes.get(z, ()) if commit else ()
            sig = self.sign(decision_subject(txid, commit, writes))
            self.send(self.env.leader(z), "DECIDE", (txid, commit, writes, sig), SMALL + 32 * len(writes))
        if self.coordinator.outcomes.get(txid):
            self._finish_2pc(txid)
            return
        self.decide_timers[txid] = self.set_timer(2 * self.cfg.prepare_timeout, self._decide_retry, txid)

    def _decide_retry(self, txid: str) -> None:
        self.decide_timers.pop(txid, None)
        if self.coordinator.inflight[txid].phase != "done":
            self._send_decide(txid)

    def on_DECIDE(self, src: str, payload) -> None:
        txid, commit, writes, sig = payload
        if txid in self.decided_local:
            if not commit or txid in self.applied_in:
                self.send(src, "DACK", (txid, self.zone), SMALL)
            return
        self.decided_local[txid] = commit
        if commit:
            self.proposer.queue_apply(TwoPCApply(txid, tuple(writes), sig))
            self._arm_batch()
        else:
            self.locks.release(txid)
            self.send(src, "DACK", (txid, self.zone), SMALL)

    def on_DACK(self, src: str, payload) -> None:
        txid, zone = payload
        out = self.coordinator.ack(txid, zone)
        if out:
            self._finish_2pc(txid)

    def _finish_2pc(self, txid: str) -> None:
        out = self.coordinator.outcomes[txid]
        self.env.outcomes.finalize(txid, COMMITTED if out == "committed" else ABORTED, self.now)
        self.cancel_timer(self.decide_timers.pop(txid, None))

    # -- crash recovery --

    def on_recover(self) -> None:
        self.batch_timer = None
        if self.proposer is not None:
            self._arm_batch()
            for block in sorted(self.proposed.values(), key=lambda b: b.number):
                self.broadcast(self.locals, "PROPOSE", block, block.size_bytes())
        if self.coordinator is not None:
            for txid, st in self.coordinator.inflight.items():
                if not st.decided:
                    self._prepare_timeout(txid)
                elif st.phase != "done":
                    self._send_decide(txid)
        if self.env.main_chain and self.main_active:
            self.vertex_timer = None
            self.fetch_timer = None
            for n, b in sorted(self.local_certified.items()):
                if n not in self.avail_done:
                    self._distribute(b)
            if self.my_pending is not None:
                v = self.my_pending[0]
                self.broadcast(self.members(), "VERTEX", v, v.size_bytes())
            if self.fetching:
                self._fetch_retry()
            for k, rec in sorted(self.records.items()):
                if not rec.emitted and k not in self.inherited:
                    self._emit_proof(k)
            self.cert_timer = None
            self._request_certs()
            self.block_timer = None
            self._fetch_blocks()
            self._maybe_propose()

    # -- standby: view change and catch-up --

    def on_VIEWCHANGE(self, src: str, payload) -> None:
        zone, view, sig = payload
        if self.serving or zone != self.zone or zone in self.env.standby_used:
            return
        if self.vc.add(view, sig, self.env.registry, self.locals):
            self._take_over()

    def _take_over(self) -> None:
        self.env.grant(self.zone, self.id)
        sigs = tuple(self.vc.votes.values())
        self.broadcast(self.locals, "NEWVIEW", (self.zone, self.vc.view, sigs), SMALL + 48 * len(sigs))
        self.broadcast(self.locals, "STATE_REQ", None, SMALL)
        if self.env.main_chain:
            self.broadcast(self.peers(), "CATCHUP_REQ", None, SMALL)
            self.set_timer(4 * self.cfg.delta_sync, self._catchup_retry)

    def _catchup_retry(self) -> None:
        if self.main_active:
            return
        self.broadcast(self.peers(), "CATCHUP_DREQ", None, SMALL)
        self.set_timer(4 * self.cfg.delta_sync, self._catchup_retry)

    def on_CATCHUP_DREQ(self, src: str, _payload) -> None:
        if self.main_active:
            self.send(src, "CATCHUP_DIGESTS", dict(self.ledger.state_digests),
                      SMALL + 40 * len(self.ledger.state_digests))

    def on_CATCHUP_REQ(self, src: str, _payload) -> None:
        if not self.main_active:
            return
        self.send(src, "CATCHUP_DIGESTS", dict(self.ledger.state_digests), SMALL + 40 * len(self.ledger.state_digests))
        source = sorted(m for m in self.env.membership.current() if m != src)[0]
        if source == self.id:
            snap = Snapshot(
                view=self.view.copy(),
                commit_state=dataclasses.replace(
                    self.consensus.state, zone_high=dict(self.consensus.state.zone_high),
                    anchors=list(self.consensus.state.anchors)),
                ledger=self.ledger.copy(),
                records=dict(self.records),
                commit_queue=list(self.commit_queue),
                mempools={z: _copy_mempool(mp) for z, mp in self.mempools.items()},
                proof_certs=dict(self.pool.certs),
                k=self.ledger.k,
            )
            size = sum(b.size_bytes() for mp in self.mempools.values() for b in mp.blocks.values())
            size += 64 * len(self.ledger.db) + sum(v.size_bytes() for v in self.view.vertices())
            self.send(src, "CATCHUP", snap, size)

    def on_CATCHUP_DIGESTS(self, src: str, digests: dict) -> None:
        self.catchup_digests[src] = digests
        self._try_install()

    def on_CATCHUP(self, src: str, snap: Snapshot) -> None:
        if self.snapshot is None:
            self.snapshot = snap
            self._try_install()

    def _try_install(self) -> None:
        snap = self.snapshot
        if snap is None or self.main_active:
            return
        want = snap.ledger.state_digests[snap.k]
        agree = [m for m, d in self.catchup_digests.items() if d.get(snap.k) == want]
        if len(agree) < self.topo.proc_quorum:
            return
        self.view = snap.view
        self.consensus = Bullshark(self.view, self.env.membership, self.topo.commit_votes, snap.commit_state)
        self.ledger = snap.ledger
        self.records = {k: dataclasses.replace(r) for k, r in snap.records.items()}
        self.inherited = set(self.records)
        self.commit_queue = deque(snap.commit_queue)
        self.mempools = snap.mempools
        self.pool.certs.update(snap.proof_certs)
        for k, rec in self.records.items():
            self.pool.expect(k, rec.proof.subject)
            rec.cert = self.pool.certs.get(k)
        self.content = {n.vertex.vid for n in (self.view.node(vid) for vid in _all_vids(self.view))
                        if n.vertex.digests and not (self.consensus.state.committed >> n.index) & 1}
        self.main_active = True
        held, self.held = self.held, []
        for src, msg in held:
            self.handle(src, msg)
        self._process_commits()
        self._maybe_resume_zone()

    def on_STATE(self, src: str, payload) -> None:
        if src not in self.locals or self.catchup_done:
            return
        self.local_states[src] = payload
        self._maybe_resume_zone()

    def _maybe_resume_zone(self) -> None:
        if self.catchup_done or (self.env.main_chain and not self.main_active):
            return
        if len(self.local_states) < self.topo.local_quorum:
            return
        groups = defaultdict(list)
        for m, st in self.local_states.items():
            groups[st["digest"]].append(st)
        good = [g for g in groups.values() if len(g) >= self.topo.f_local + 1]
        if not good:
            return
        best = max(good, key=lambda g: g[0]["height"])[0]
        self.catchup_done = True
        chain = best["chain"]
        self._install_proposer(best["db"].copy(), best["height"] + 1, best["head"], best["epoch"])
        self.local_certified = {b.number: b for b in chain}
        self.seen_txids.update(tx.txid for b in chain for tx in b.txs)
        if self.env.main_chain:
            synced = best["synced"]
            proc_k = min(st["proc_k"] for st in self.local_states.values())
            h = self.view.max_zone_high(self.zone)
            mp = self.mempools[self.zone]
            mp.reset_cursor(h + 1)
            for b in chain:
                mp.store(b)
            for b in chain:
                if b.number > h:
                    self._distribute(b)
            self.next_proc = 1
            for k in sorted(self.records):
                rec = self.records[k]
                if k in self.inherited:
                    rec.emitted = True
                rec.cert = rec.cert or self.pool.certs.get(k)
                if rec.cert is None or not rec.emitted:
                    break
                ents = rec.result.ents.for_zone(self.zone)
                self._relay(rec, send=k > proc_k, sync=bool(ents) and k not in synced)
                self.next_proc = k + 1
            self._request_certs()
        self.serving = True
        if self.env.main_chain:
            self._try_relay()
        txs, self.tx_buffer = self.tx_buffer, []
        for tx in txs:
            self.on_TX(self.id, tx)
        if self.env.main_chain:
            self._maybe_propose()

    def _request_certs(self) -> None:
        self.cert_timer = None
        missing = [k for k in self.inherited if k >= self.next_proc and k not in self.pool.certs]
        if not missing:
            return
        for k in sorted(set(missing)):
            self.broadcast(self.peers(), "CERT_REQ", k, SMALL)
        self.cert_timer = self.set_timer(4 * self.cfg.delta_sync, self._request_certs)

    # -- accounting --

    def storage_bytes(self) -> int:
        if not self.serving and not self.main_active:
            return 0
        total = 0
        if self.env.main_chain:
            total += sum(b.size_bytes() for mp in self.mempools.values() for b in mp.blocks.values())
            total += sum(v.size_bytes() for v in self.view.vertices())
            total += 64 * len(self.ledger.db)
        else:
            total += sum(b.size_bytes() for b in self.local_certified.values())
            if self.proposer is not None:
                total += 64 * len(self.proposer.db)
        return total


def _copy_mempool(mp: ZoneMempool) -> ZoneMempool:
    other = ZoneMempool(mp.zone, mp.next())
    other.blocks = dict(mp.blocks)
    other.by_digest = dict(mp.by_digest)
    other.available = dict(mp.available)
    return other


def _all_vids(view: DagView):
    return [n.vertex.vid for n in (view.by_index(i) for i in range(len(view)))]


# -- local member -------------------------------------------------------------------

class LocalMember(Node):
    def __init__(self, sim: Simulator, env: Env, node_id: str, zone: int) -> None:
        super().__init__(sim, node_id)
        self.env = env
        env.nodes[node_id] = self
        self.zone = zone
        self.topo = env.topo
        self.signer = env.registry.signer(node_id)
        self.validator = LocalValidator(zone, StateDB.genesis(env.genesis, zone))
        self.leader = env.topo.full_members[zone]
        self.view_no = 0
        self.peers = [m for m in env.topo.local_members[zone] if m != node_id]
        self.buffer: dict[int, LocalBlock] = {}
        self.endorsements: dict[Digest, dict] = defaultdict(dict)
        self.mine: dict[Digest, Endorsement] = {}
        self.certs: dict[int, Certificate] = {}
        self.sync_payloads: dict[int, tuple] = {}
        self.proc_k = 0
        self.proc_buffer: dict[int, ProcMsg] = {}
        self.main_upto = 0
        self.main_confirmed: dict[int, tuple[int, frozenset]] = {}
        self.early_avail: set[int] = set()
        self.audit = AuditTracker(node_id, env.audit)
        self.timer_handles: dict[int, int] = {}
        self.foreign: dict[tuple[int, int], LocalBlock] = {}

    def sign(self, subj: Digest):
        return self.signer.sign(subj)

    # -- local consensus --

    def on_PROPOSE(self, src: str, b: LocalBlock) -> None:
        if src != self.leader or b.zone != self.zone:
            return
        v = self.validator
        if b.number <= v.height:
            if v.chain[b.number - 1].hash == b.hash and b.hash in self.mine:
                self.send(src, "ENDORSE", self.mine[b.hash], SMALL)
            return
        prev = self.buffer.get(b.number)
        if prev is not None:
            if prev.hash != b.hash:
                self.env.obs.evidence.append(("local-equivocation", self.id, b.number))
            return
        self.buffer[b.number] = b
        self._advance()

    def _sync_payload(self, k: int):
        entries = self.sync_payloads.get(k)
        return list(entries) if entries is not None else None

    def _check_apply(self, ap: TwoPCApply) -> bool:
        return (ap.decision_sig.member in (self.topo.full_members[0], standby_id(0))
                and self.env.registry.verify(ap.decision_sig, decision_subject(ap.txid, True, ap.writes)))

    def _advance(self) -> None:
        v = self.validator
        while True:
            n = v.height + 1
            b = self.buffer.get(n)
            if b is None:
                return
            if not v.is_validated(b.hash):
                try:
                    res = v.validate_local_proposal(b, self._sync_payload, self._check_apply)
                except Defer:
                    return
                if isinstance(res, Reject):
                    del self.buffer[n]
                    self.env.obs.rejects.append((self.id, n, res.reason))
                    if res.reason in PROVABLE_REJECTS:
                        self._conclude(n, "proposal")
                    return
                e = Endorsement(self.zone, n, b.hash, self.sign(endorse_subject(b.hash)))
                self.mine[b.hash] = e
                self.endorsements[b.hash][self.id] = e
                self.broadcast([self.leader] + self.peers, "ENDORSE", e, SMALL)
            if not self._try_commit(b):
                return

    def on_ENDORSE(self, src: str, e: Endorsement) -> None:
        if e.zone != self.zone or e.sig.member != src or src not in self.peers:
            return
        if not self.env.registry.verify(e.sig, endorse_subject(e.block_hash)):
            return
        self.endorsements[e.block_hash][src] = e
        b = self.buffer.get(e.number)
        if b is not None and b.hash == e.block_hash and e.number == self.validator.height + 1:
            if self.validator.is_validated(b.hash) and self._try_commit(b):
                self._advance()

    def _try_commit(self, b: LocalBlock) -> bool:
        es = self.endorsements.get(b.hash, {})
        if len(es) < self.topo.local_quorum:
            return False
        cert = form_local_commit_cert(es.values(), self.topo.local_members[self.zone], self.topo.local_quorum)
        if cert is None:
            return False
        staged = self.validator.commit(b)
        self.buffer.pop(b.number, None)
        self.certs[b.number] = cert
        self.endorsements.pop(b.hash, None)
        self._check_topdown(staged)
        self._on_local_commit(b)
        return True

    def _check_topdown(self, staged) -> None:
        for k, values in staged.post_sync.items():
            main = self.env.obs.main_values.get(k)
            self.env.obs.topdown_checks += 1
            if main is None:
                continue
            for key, value in values.items():
                if main.get(key) != value:
                    self.env.obs.topdown_violations.append((self.id, k, key, value, main.get(key)))

    def _on_local_commit(self, b: LocalBlock) -> None:
        n = b.number
        if not self.env.main_chain:
            for tx in b.txs:
                if tx.is_local:
                    self.env.outcomes.confirm(self.id, tx.txid, COMMITTED, 0, self.now)
            return
        if n in self.main_confirmed:
            k, aborted = self.main_confirmed.pop(n)
            self._emit_events(b, k, aborted)
            return
        if n in self.early_avail:
            self.early_avail.discard(n)
            self._start_timer(n, PROC)
        else:
            self._start_timer(n, AVAIL)

    def _emit_events(self, b: LocalBlock, k: int, aborted) -> None:
        for tx in b.txs:
            status = ABORTED if tx.txid in aborted else COMMITTED
            self.env.outcomes.confirm(self.id, tx.txid, status, k, self.now)

    # -- audit --

    def _start_timer(self, n: int, phase: str) -> None:
        self.cancel_timer(self.timer_handles.pop(n, None))
        entry = self.audit.start(n, phase, self.now)
        self.timer_handles[n] = self.set_timer(entry.deadline - self.now, self._deadline, n, phase)

    def _deadline(self, n: int, phase: str) -> None:
        self.timer_handles.pop(n, None)
        entry = self.audit.expire(n, phase, self.now)
        if entry is not None:
            self.timer_handles[n] = self.set_timer(self.env.audit.delta_gst, self._gst_deadline, n, phase)

    def _gst_deadline(self, n: int, phase: str) -> None:
        self.timer_handles.pop(n, None)
        if self.audit.gst_expired(n, self.now):
            self._conclude(n, phase)

    def _satisfy(self, n: int, phase: str) -> bool:
        if self.audit.satisfy(n, phase, self.now):
            self.cancel_timer(self.timer_handles.pop(n, None))
            return True
        return False

    def _conclude(self, n: int, phase: str) -> None:
        if self.zone in self.env.standby_used:
            return
        if self.audit.conclude_fault(n, phase, self.now):
            sig = self.sign(viewchange_subject(self.zone, self.view_no))
            self.send(standby_id(self.zone), "VIEWCHANGE", (self.zone, self.view_no, sig), SMALL)

    def on_AVAIL(self, src: str, payload) -> None:
        header, cert = payload
        if src != self.leader or header.zone != self.zone:
            return
        if not certificate_ok(cert, self.env.registry, self.env.membership.ever(), self.topo.full_quorum,
                              CERT_AVAIL, ack_subject(header)):
            return
        n = header.number
        v = self.validator
        if n <= v.height:
            if v.chain[n - 1].hash == header.digest and self._satisfy(n, AVAIL):
                self._start_timer(n, PROC)
        elif n not in self.main_confirmed:
            self.early_avail.add(n)

    def on_PROC(self, src: str, m: ProcMsg) -> None:
        if src != self.leader or m.k <= self.proc_k:
            return
        self.proc_buffer.setdefault(m.k, m)
        while self.proc_k + 1 in self.proc_buffer:
            if not self._apply_proc(self.proc_buffer.pop(self.proc_k + 1)):
                return
        self._advance()

    def _apply_proc(self, m: ProcMsg) -> bool:
        if m.proof.k != m.k or not certificate_ok(m.cert, self.env.registry, self.env.membership.ever(),
                                                  self.topo.proc_quorum, m.cert.kind, m.proof.subject):
            self.env.obs.evidence.append(("bad-proc-cert", self.id, m.k))
            return False
        if zone_digest(m.k, self.zone, m.ents, m.aborted) != m.proof.zone_digests[self.zone]:
            self.env.obs.evidence.append(("ents-tamper", self.id, m.k))
            return False
        own = [h for h in m.proof.hdrs if h.zone == self.zone]
        expected = self.main_upto
        v = self.validator
        for h in own:
            expected += 1
            if h.number != expected or (h.number <= v.height and v.chain[h.number - 1].hash != h.digest):
                self.env.obs.evidence.append(("hdr-order", self.id, m.k, h.number))
                return False
        self.proc_k = m.k
        self.sync_payloads[m.k] = tuple(m.ents)
        aborted = frozenset(m.aborted)
        for h in own:
            self.main_upto = h.number
            if not self._satisfy(h.number, PROC):
                self._satisfy(h.number, AVAIL)
            self.early_avail.discard(h.number)
            if h.number <= v.height:
                self._emit_events(v.chain[h.number - 1], m.k, aborted)
            else:
                self.main_confirmed[h.number] = (m.k, aborted)
        return True

    def on_BLOCKS(self, src: str, payload) -> None:
        k, blocks = payload
        if src != self.leader:
            return
        for b in blocks:
            self.foreign[(b.zone, b.number)] = b

    # -- view change --

    def on_NEWVIEW(self, src: str, payload) -> None:
        zone, view, sigs = payload
        if zone != self.zone or view != self.view_no or src != standby_id(self.zone):
            return
        population = set(self.topo.local_members[self.zone])
        good = {s.member for s in sigs if s.member in population
                and self.env.registry.verify(s, viewchange_subject(self.zone, view))}
        if len(good) < self.topo.local_quorum:
            return
        self.view_no += 1
        self.leader = src
        self.buffer.clear()
        self.proc_buffer.clear()
        for h in list(self.timer_handles.values()):
            self.cancel_timer(h)
        self.timer_handles.clear()
        for entry in self.audit.reset_for_new_view(self.now):
            self.timer_handles[entry.number] = self.set_timer(entry.deadline - self.now, self._deadline,
                                                              entry.number, entry.phase)

    def on_STATE_REQ(self, src: str, _payload) -> None:
        if src != standby_id(self.zone):
            return
        v = self.validator
        state = {
            "height": v.height, "head": v.head_hash, "db": v.db.copy(), "epoch": v.sync_epoch,
            "synced": frozenset(v.db.synced_blocks), "chain": tuple(b.with_cert(self.certs[b.number]) for b in v.chain),
            "proc_k": self.proc_k, "digest": v.state_digest(),
        }
        size = SMALL + 64 * len(v.db) + sum(b.size_bytes() for b in v.chain)
        self.send(src, "STATE", state, size)

    def storage_bytes(self) -> int:
        total = sum(b.size_bytes() for b in self.validator.chain) + 64 * len(self.validator.db)
        total += sum(b.size_bytes() for b in self.foreign.values())
        return total


# -- clients ------------------------------------------------------------------------

class Client(Node):
    """Submits a pre-generated schedule of transactions to its zone's full member."""

    def __init__(self, sim: Simulator, env: Env, node_id: str, zone: int, schedule, retry: int = 0) -> None:
        super().__init__(sim, node_id)
        self.env = env
        self.zone = zone
        self.schedule = list(schedule)
        self.retry = retry
        self._i = 0
        self._retry_timer = None
        env.clients[zone].append(self)
        if self.schedule:
            self.set_timer(self.schedule[0][0], self._fire)

    def _fire(self) -> None:
        t, tx = self.schedule[self._i]
        self._i += 1
        self.env.outcomes.submit(tx.txid, self.zone, self.now, not _is_local_for(tx, self.zone))
        self.send(self.env.leader(self.zone), "TX", tx, tx.size_bytes)
        if self._i < len(self.schedule):
            self.set_timer(self.schedule[self._i][0] - self.now, self._fire)
        if self.retry and self._retry_timer is None:
            self._retry_timer = self.set_timer(self.retry, self._resubmit)

    def _pending(self):
        return [tx for _, tx in self.schedule[:self._i] if self.env.outcomes.status(tx.txid) == UNRESOLVED]

    def _resubmit(self) -> None:
        self._retry_timer = None
        cutoff = self.now - self.retry
        pending = self._pending()
        for tx in pending:
            if self.env.outcomes.submitted[tx.txid].time <= cutoff:
                self.send(self.env.leader(self.zone), "TX", tx, tx.size_bytes)
        if pending or self._i < len(self.schedule):
            self._retry_timer = self.set_timer(self.retry, self._resubmit)

    def reroute(self) -> None:
        """The zone's full member changed: resubmit everything still awaiting an outcome."""
        for tx in self._pending():
            self.send(self.env.leader(self.zone), "TX", tx, tx.size_bytes)


def _is_local_for(tx: Transaction, zone: int) -> bool:
    try:
        return classify_transaction(tx, zone).is_local
    except Exception:
        return True
