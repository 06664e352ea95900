"""Deterministic discrete-event network and clock.

Simulated time is an integer number of microseconds. Every source of
randomness is a ``random.Random`` seeded from the run seed, and ties between
events at the same instant are broken by enqueue order, so a (seed, config)
pair fully determines the event trace.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

log = logging.getLogger(__name__)

INF = float("inf")


class ModelViolation(RuntimeError):
    """A node broke the communication model (e.g. cross-zone local traffic)."""


class SimulationError(RuntimeError):
    """A handler raised; carries the tail of the event trace."""

    def __init__(self, message: str, trace_tail: list[str]):
        super().__init__(message + "\n--- last events ---\n" + "\n".join(trace_tail))
        self.trace_tail = trace_tail


@dataclass(frozen=True)
class Message:
    kind: str
    payload: Any
    size: int = 128


@dataclass
class DelayModel:
    """Per-message delay: seeded jitter bounded by ``delta_sync``.

    Messages sent inside an asynchronous window are held until the window
    closes (or dropped when ``drop_in_async``), then delivered with normal
    jitter. Outside the windows every message arrives within ``delta_sync``.
    """

    delta_sync: int
    low: Optional[int] = None
    high: Optional[int] = None
    async_windows: list[tuple[int, int]] = field(default_factory=list)
    drop_in_async: bool = False

    def __post_init__(self) -> None:
        if self.low is None:
            self.low = max(1, self.delta_sync // 10)
        if self.high is None:
            self.high = max(self.low, self.delta_sync // 2)
        if not (0 < self.low <= self.high <= self.delta_sync):
            raise ValueError("jitter must lie in (0, delta_sync]")

    def in_async(self, t: int) -> Optional[tuple[int, int]]:
        for start, end in self.async_windows:
            if start <= t < end:
                return start, end
        return None

    def delivery_time(self, rng: random.Random, t: int) -> Optional[int]:
        jitter = rng.randint(self.low, self.high)
        window = self.in_async(t)
        if window is None:
            return t + jitter
        if self.drop_in_async:
            return None
        return window[1] + jitter

    @property
    def gst(self) -> int:
        return max((end for _, end in self.async_windows), default=0)


FAULT_KINDS = ("crash", "drop", "delay", "equivocate", "tamper")


@dataclass(frozen=True)
class FaultSpec:
    target: str
    kind: str
    message_class: Optional[str] = None
    amount: int = 0
    field: Optional[str] = None
    phase: Optional[str] = None
    start: int = 0
    end: float = INF

    def __post_init__(self) -> None:
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.kind in ("drop", "delay") and not self.message_class:
            raise ValueError(f"{self.kind} fault needs a message_class")

    def active(self, t: int) -> bool:
        return self.start <= t < self.end


class Node:
    """Base class for simulated processes. Messages dispatch to ``on_<KIND>``."""

    def __init__(self, sim: "Simulator", node_id: str) -> None:
        self.sim = sim
        self.id = node_id
        sim.register(self)

    @property
    def now(self) -> int:
        return self.sim.now

    def send(self, dst: str, kind: str, payload: Any = None, size: int = 128) -> None:
        self.sim.send(self.id, dst, Message(kind, payload, size))

    def broadcast(self, dsts, kind: str, payload: Any = None, size: int = 128) -> None:
        msg = Message(kind, payload, size)
        for dst in dsts:
            self.sim.send(self.id, dst, msg)

    def set_timer(self, delay: int, fn: Callable, *args) -> int:
        return self.sim.set_timer(self.id, delay, fn, *args)

    def cancel_timer(self, handle: Optional[int]) -> None:
        if handle is not None:
            self.sim.cancel_timer(handle)

    def handle(self, src: str, msg: Message) -> None:
        fn = getattr(self, "on_" + msg.kind, None)
        if fn is None:
            raise ValueError(f"{self.id} has no handler for {msg.kind}")
        fn(src, msg.payload)

    def on_recover(self) -> None:
        """Called when a crash window ends."""


_DELIVER = 0
_TIMER = 1
_CALL = 2


class Simulator:
    def __init__(
        self,
        seed: int = 0,
        delay: Optional[DelayModel] = None,
        zone_of: Optional[Callable[[str], Optional[int]]] = None,
        is_local_member: Optional[Callable[[str], bool]] = None,
        trace: bool = False,
    ) -> None:
        self.seed = seed
        self.rng = random.Random(seed)
        # one jitter stream per directed link: traffic on one link never
        # perturbs delays on another
        self._link_rng: dict[tuple[str, str], random.Random] = {}
        self.delay = delay or DelayModel(delta_sync=100_000)
        self.now = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._timer_ids = itertools.count(1)
        self._cancelled: set[int] = set()
        self.nodes: dict[str, Node] = {}
        self.faults: list[FaultSpec] = []
        self.crashed: set[str] = set()
        self.revoked: set[str] = set()
        self.outbound_filters: dict[str, list[Callable]] = defaultdict(list)
        self._zone_of = zone_of
        self._is_local = is_local_member or (lambda _id: False)
        self.link_bytes: Counter = Counter()
        self.kind_bytes: Counter = Counter()
        self.kind_count: Counter = Counter()
        self.sent_bytes: Counter = Counter()
        self.model_violations = 0
        self.keep_trace = trace
        self.trace: list[str] = []
        self._trace_hash = hashlib.sha256()
        self._tail: list[str] = []
        self.delivered = 0

    # -- registration --

    def register(self, node: Node) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node

    # -- faults --

    def inject_fault(self, spec: FaultSpec) -> None:
        if spec.target not in self.nodes:
            raise KeyError(f"unknown fault target {spec.target}")
        self.faults.append(spec)
        if spec.kind == "crash":
            self.call_at(spec.start, self._crash, spec.target)
            if spec.end != INF:
                self.call_at(int(spec.end), self._recover, spec.target)

    def _crash(self, node_id: str) -> None:
        self.crashed.add(node_id)

    def _recover(self, node_id: str) -> None:
        self.crashed.discard(node_id)
        self.nodes[node_id].on_recover()

    def revoke(self, node_id: str) -> None:
        """Cut a deposed member off the network."""
        self.revoked.add(node_id)

    def add_outbound_filter(self, node_id: str, fn: Callable) -> None:
        self.outbound_filters[node_id].append(fn)

    def _fault_filter(self, src: str, msg: Message, t: int) -> tuple[bool, int]:
        drop, extra = False, 0
        for f in self.faults:
            if f.target != src or not f.active(t):
                continue
            if f.kind == "drop" and f.message_class in (msg.kind, "*"):
                drop = True
            elif f.kind == "delay" and f.message_class in (msg.kind, "*"):
                extra += f.amount
        return drop, extra

    # -- messaging --

    def send(self, src: str, dst: str, msg: Message) -> None:
        if self._zone_of is not None and self._is_local(src):
            if self._zone_of(src) != self._zone_of(dst):
                self.model_violations += 1
                raise ModelViolation(f"local member {src} sent {msg.kind} across zones to {dst}")
        if src in self.crashed or src in self.revoked:
            return
        if src == dst:
            heapq.heappush(self._queue, (self.now, next(self._seq), _DELIVER, dst, (src, msg)))
            return
        for fn in self.outbound_filters.get(src, ()):
            msg = fn(dst, msg)
            if msg is None:
                return
        drop, extra = self._fault_filter(src, msg, self.now)
        self.sent_bytes[src] += msg.size
        self.link_bytes[(src, dst)] += msg.size
        self.kind_bytes[msg.kind] += msg.size
        self.kind_count[msg.kind] += 1
        if drop:
            return
        rng = self._link_rng.get((src, dst))
        if rng is None:
            rng = self._link_rng[(src, dst)] = random.Random(f"{self.seed}/{src}/{dst}")
        at = self.delay.delivery_time(rng, self.now)
        if at is None:
            return
        heapq.heappush(self._queue, (at + extra, next(self._seq), _DELIVER, dst, (src, msg)))

    def set_timer(self, node_id: str, delay: int, fn: Callable, *args) -> int:
        handle = next(self._timer_ids)
        heapq.heappush(
            self._queue, (self.now + max(0, int(delay)), next(self._seq), _TIMER, node_id, (handle, fn, args))
        )
        return handle

    def cancel_timer(self, handle: int) -> None:
        self._cancelled.add(handle)

    def call_at(self, t: int, fn: Callable, *args) -> None:
        """Schedule a simulator-level callback (not owned by any node)."""
        heapq.heappush(self._queue, (max(t, self.now), next(self._seq), _CALL, "", (fn, args)))

    # -- running --

    def _record(self, line: str) -> None:
        self._trace_hash.update(line.encode())
        self._trace_hash.update(b"\n")
        if self.keep_trace:
            self.trace.append(line)
        self._tail.append(line)
        if len(self._tail) > 64:
            del self._tail[:32]

    @property
    def trace_digest(self) -> str:
        return self._trace_hash.hexdigest()

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t: Optional[int] = None) -> None:
        """Process events in (time, seq) order until time ``t`` or quiescence."""
        q = self._queue
        while q:
            if t is not None and q[0][0] > t:
                break
            at, _, kind, target, data = heapq.heappop(q)
            self.now = at
            try:
                if kind == _DELIVER:
                    src, msg = data
                    if target in self.crashed or target in self.revoked:
                        continue
                    node = self.nodes.get(target)
                    if node is None:
                        continue
                    self.delivered += 1
                    self._record(f"{at} {src} {target} {msg.kind} {msg.size}")
                    node.handle(src, msg)
                elif kind == _TIMER:
                    handle, fn, args = data
                    if handle in self._cancelled:
                        self._cancelled.discard(handle)
                        continue
                    if target in self.crashed or target in self.revoked:
                        continue
                    fn(*args)
                else:
                    fn, args = data
                    fn(*args)
            except (SimulationError, ModelViolation):
                raise
            except Exception as exc:
                raise SimulationError(f"handler failed at t={at} on {target}: {exc!r}", list(self._tail)) from exc
        if t is not None and t > self.now:
            self.now = t

    def write_trace(self, path, header: str = "") -> None:
        with open(path, "w") as fh:
            if header:
                fh.write("# " + header + "\n")
            for line in self.trace:
                fh.write(line + "\n")
