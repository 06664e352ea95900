"""Byzantine behaviours as outbound adapters around honest nodes.

Each adapter rewrites messages on their way out of the target; the node's
own state machine stays honest, so every misbehaviour here is something a
real implementation could do without forking protocol code.
"""

from __future__ import annotations

import dataclasses

from .codec import digest_of
from .simnet import FaultSpec, Message

SMALL = 128


def _now(sim) -> int:
    return sim.now


def equivocate_vertices(sim, env, node, spec: FaultSpec):
    """Send one vertex to half the peers and a conflicting one to the rest."""
    variants: dict = {}

    def fn(dst, msg):
        if msg.kind != "VERTEX" or not spec.active(_now(sim)):
            return msg
        v = msg.payload
        peers = sorted(node.peers())
        if dst not in peers or peers.index(dst) < len(peers) // 2:
            return msg
        w = variants.get(v.vid)
        if w is None:
            if v.digests:
                w = dataclasses.replace(v, digests=(), avail_certs=())
            elif len(v.parents) > 1:
                w = dataclasses.replace(v, parents=tuple(reversed(v.parents)))
            else:
                return msg
            variants[v.vid] = w
        return Message(msg.kind, w, w.size_bytes())

    return fn


def reorder_digests(sim, env, node, spec: FaultSpec):
    """Emit the zone's block digests out of order inside vertices."""
    tampered: dict = {}
    last = []

    def fn(dst, msg):
        if msg.kind != "VERTEX" or not spec.active(_now(sim)):
            return msg
        v = msg.payload
        w = tampered.get(v.vid)
        if w is None:
            pairs = list(zip(v.digests, v.avail_certs))
            if len(pairs) >= 2:
                pairs[0], pairs[1] = pairs[1], pairs[0]
            elif pairs and last:
                pairs = pairs + [last[-1]]
            if v.digests:
                last[:] = [(v.digests[-1], v.avail_certs[-1])]
            if [h for h, _ in pairs] == list(v.digests):
                return msg
            w = dataclasses.replace(v, digests=tuple(h for h, _ in pairs), avail_certs=tuple(c for _, c in pairs))
            tampered[v.vid] = w
        return Message(msg.kind, w, w.size_bytes())

    return fn


def tamper_ents(sim, env, node, spec: FaultSpec):
    """Relay sync entries whose value differs from the certified result."""

    def fn(dst, msg):
        if msg.kind != "PROC" or not spec.active(_now(sim)) or not msg.payload.ents:
            return msg
        m = msg.payload
        first = m.ents[0]
        ents = (first._replace(value=first.value + 1),) + tuple(m.ents[1:])
        return Message(msg.kind, dataclasses.replace(m, ents=ents), msg.size)

    return fn


def tamper_global_digest(sim, env, node, spec: FaultSpec):
    """Sign and broadcast a processing proof with a forged global digest."""
    cache: dict = {}

    def fn(dst, msg):
        if msg.kind != "PROOF" or not spec.active(_now(sim)):
            return msg
        proof, _ = msg.payload
        forged = cache.get(proof.k)
        if forged is None:
            bad = dataclasses.replace(proof, global_digest=digest_of(("forged", proof.k)))
            forged = (bad, env.registry.sign(node.id, bad.subject))
            cache[proof.k] = forged
        return Message(msg.kind, forged, msg.size)

    return fn


def tamper_rwset(sim, env, node, spec: FaultSpec):
    """Propose local blocks whose recorded write values were altered."""
    cache: dict = {}

    def fn(dst, msg):
        if msg.kind != "PROPOSE" or not spec.active(_now(sim)):
            return msg
        b = msg.payload
        bad = cache.get(b.number)
        if bad is None:
            txs = list(b.txs)
            for i, tx in enumerate(txs):
                if tx.is_local and tx.write_set:
                    (key, value), *rest = tx.write_set
                    txs[i] = dataclasses.replace(tx, write_set=((key, value + 1), *rest))
                    break
            else:
                return msg
            bad = dataclasses.replace(b, txs=tuple(txs))
            cache[b.number] = bad
        return Message(msg.kind, bad, bad.size_bytes())

    return fn


def false_accusation(sim, env, node, spec: FaultSpec) -> None:
    """A local member asks the standby to depose an honest full member."""
    from .audit import viewchange_subject
    from .core import standby_id

    def accuse():
        sig = env.registry.sign(node.id, viewchange_subject(node.zone, node.view_no))
        node.send(standby_id(node.zone), "VIEWCHANGE", (node.zone, node.view_no, sig), SMALL)

    sim.call_at(int(spec.start), accuse)


FILTERS = {
    ("equivocate", "vertex"): equivocate_vertices,
    ("tamper", "vertex_order"): reorder_digests,
    ("tamper", "ents"): tamper_ents,
    ("tamper", "global_digest"): tamper_global_digest,
    ("tamper", "rwset"): tamper_rwset,
}
ACTIONS = {
    ("tamper", "viewchange"): false_accusation,
}


def install(sim, env, spec: FaultSpec) -> None:
    """Attach the adapter for ``spec`` (crash/drop/delay are handled by the simulator)."""
    node = sim.nodes[spec.target]
    key = (spec.kind, spec.phase if spec.kind == "equivocate" else spec.field)
    if key in FILTERS:
        sim.add_outbound_filter(spec.target, FILTERS[key](sim, env, node, spec))
    elif key in ACTIONS:
        ACTIONS[key](sim, env, node, spec)
    else:
        raise ValueError(f"no adapter for {spec.kind} {key[1]!r}")


def supported() -> list[tuple[str, str]]:
    return sorted(FILTERS) + sorted(ACTIONS)
