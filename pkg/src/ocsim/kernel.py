"""Deterministic discrete-event kernel: virtual clock, message bus, event trace.

Delivery order is the total order (delivered_tick, msg_id). Message delays are
integer ticks drawn from a dedicated RNG stream, so RNG use elsewhere cannot
perturb them.
"""
from __future__ import annotations

import csv
import heapq
import json
import random
from dataclasses import dataclass, field

MSG_KINDS = ("WorkingMemoryUpdate", "BlacklistNotice", "TopologyPush",
             "TaskHandover", "EscalationReport")


class NonConvergenceError(RuntimeError):
    """Tick cap exceeded; carries the partial trace."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass
class Message:
    msg_id: int
    sender: str
    receiver: str
    sent_tick: int
    delivered_tick: int
    kind: str
    content: dict
    interval: int = 0


@dataclass
class TraceEvent:
    tick: int
    message: Message
    delivered: bool  # False = suppressed at send (excluded endpoint)


@dataclass
class EventTrace:
    events: list = field(default_factory=list)
    interval_counts: dict = field(default_factory=dict)

    def delivered_events(self):
        return [e for e in self.events if e.delivered]

    def recount(self) -> dict:
        """Independent per-interval recount of delivered messages."""
        counts = {}
        for e in self.events:
            if e.delivered:
                counts[e.message.interval] = counts.get(e.message.interval, 0) + 1
        return counts


class Kernel:
    def __init__(self, seed, delay_min: int = 1, delay_max: int = 3, tick_cap: int = 200_000):
        self.clock = 0
        self.current_interval = 0
        self.delay_min = delay_min
        self.delay_max = delay_max
        self.tick_cap = tick_cap
        self.excluded = set()  # bus-level exclusion (blacklisted agents)
        self.handlers = {}  # agent id -> callable(kernel, Message)
        self.trace = EventTrace()
        self._queue = []
        self._next_msg_id = 0
        self._delay_rng = random.Random(f"ocsim-delay:{seed}")
        self.outbound_filter = None  # optional callable(Message) -> Message (wire view)
        self.tick_hook = None  # optional callable(kernel, tick), fires once per tick

    def register(self, agent_id, handler):
        self.handlers[agent_id] = handler

    @property
    def queue_empty(self):
        return not self._queue

    def send(self, sender, receiver, kind, content, delay=None) -> Message | None:
        """Schedule a message; returns None if an endpoint is bus-excluded.

        `delay` overrides the seeded draw (used for control paths with a
        known processing latency); the draw still happens so the delay stream
        stays aligned across runs that differ only in control wiring."""
        msg_id = self._next_msg_id
        self._next_msg_id += 1
        drawn = self._delay_rng.randint(self.delay_min, self.delay_max)
        if delay is None:
            delay = drawn
        # content is treated as immutable once handed to send(); the attack
        # filter copies before mutating, so no defensive copy here
        msg = Message(msg_id=msg_id, sender=sender, receiver=receiver,
                      sent_tick=self.clock, delivered_tick=self.clock + delay,
                      kind=kind, content=content,
                      interval=self.current_interval)
        if self.outbound_filter is not None:
            msg = self.outbound_filter(msg)
        if sender in self.excluded or receiver in self.excluded:
            self.trace.events.append(TraceEvent(tick=self.clock, message=msg, delivered=False))
            return None
        heapq.heappush(self._queue, (msg.delivered_tick, msg.msg_id, msg))
        return msg

    def run_until(self, condition) -> int:
        """Process events in (delivered_tick, msg_id) order until the condition
        over the kernel holds or the queue drains. Returns the tick reached.

        All messages sharing a tick are delivered as one batch; the tick hook
        then fires once, which lets agents answer a whole round of traffic
        with a single broadcast. The condition is checked between batches.
        """
        while self._queue and not condition(self):
            tick = self._queue[0][0]
            self.clock = tick
            if self.clock > self.tick_cap:
                raise NonConvergenceError(
                    f"tick cap {self.tick_cap} exceeded at tick {self.clock}", self.trace)
            while self._queue and self._queue[0][0] == tick:
                _, _, msg = heapq.heappop(self._queue)
                msg.interval = self.current_interval
                self.trace.events.append(TraceEvent(tick=tick, message=msg, delivered=True))
                self.trace.interval_counts[msg.interval] = \
                    self.trace.interval_counts.get(msg.interval, 0) + 1
                handler = self.handlers.get(msg.receiver)
                if handler is not None and msg.receiver not in self.excluded:
                    handler(self, msg)
            if self.tick_hook is not None:
                self.tick_hook(self, tick)
        return self.clock

    def run_to_quiescence(self) -> int:
        return self.run_until(lambda k: False)


# --- trace export ---

TRACE_CSV_COLUMNS = ("msg_id", "sender", "receiver", "sent_tick",
                     "delivered_tick", "kind", "interval", "delivered")


def _event_record(e: TraceEvent) -> dict:
    m = e.message
    return {"msg_id": m.msg_id, "sender": m.sender, "receiver": m.receiver,
            "sent_tick": m.sent_tick, "delivered_tick": m.delivered_tick,
            "kind": m.kind, "interval": m.interval, "delivered": e.delivered,
            "content": m.content}


def export_trace_jsonl(trace: EventTrace, path) -> None:
    with open(path, "w") as f:
        for e in trace.events:
            f.write(json.dumps(_event_record(e), sort_keys=True))
            f.write("\n")


def export_trace_csv(trace: EventTrace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_CSV_COLUMNS)
        for e in trace.events:
            rec = _event_record(e)
            w.writerow([rec[c] for c in TRACE_CSV_COLUMNS])
