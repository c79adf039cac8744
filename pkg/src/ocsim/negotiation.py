"""Gossip self-consumption negotiation.

Each interval is one negotiation episode: agents exchange working memories
over the communication topology, best-respond with one of their feasible
schedules, and converge to a joint cluster schedule. All tie-breaking is by
lowest index / lexicographic agent id so runs are fully deterministic.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .model import quantize


def objective(aggregate, target) -> float:
    """L1 distance of the aggregate power vector to the target profile."""
    if len(aggregate) != len(target):
        raise ValueError(f"length mismatch: {len(aggregate)} vs {len(target)}")
    return sum(abs(a - t) for a, t in zip(aggregate, target))


def choose_best_schedule(feasible_schedules, others_aggregate, target) -> int:
    """Index of the feasible schedule minimizing the joint objective given the
    other agents' aggregate; ties broken by lowest index."""
    if feasible_schedules and len(feasible_schedules[0]) != len(others_aggregate):
        raise ValueError("others_aggregate length does not match schedule length")
    best_idx, best_obj = 0, None
    for i, sched in enumerate(feasible_schedules):
        obj = objective([o + s for o, s in zip(others_aggregate, sched)], target)
        if best_obj is None or obj < best_obj:
            best_idx, best_obj = i, obj
    return best_idx


@dataclass
class Candidate:
    assignment: dict  # agent id -> tuple of kW values
    objective: float
    stamp: tuple = ()  # (creation tick, creator id); earliest wins exact ties

    def covers(self):
        return set(self.assignment)


@dataclass
class WorkingMemory:
    entries: dict = field(default_factory=dict)  # agent id -> (values tuple, revision)
    best_candidate: Candidate | None = None


def candidate_key(candidate: Candidate):
    """Canonical sort key for tie-breaking between equally good candidates."""
    return tuple(sorted(candidate.assignment.items()))


def candidate_better(new: Candidate | None, old: Candidate | None) -> bool:
    """True if `new` should replace `old`: strictly more coverage, or equal
    coverage with strictly lower objective. Exact ties (same coverage, same
    objective) go to the candidate created first (its stamp), so all agents
    settle on one single candidate instead of committing to different but
    equally good ones — and a later discovery of an equally good alternative
    causes no extra gossip wave."""
    if new is None:
        return False
    if old is None:
        return True
    if len(new.assignment) != len(old.assignment):
        return len(new.assignment) > len(old.assignment)
    if new.objective != old.objective:
        return new.objective < old.objective
    if new.stamp != old.stamp:
        return new.stamp < old.stamp
    return candidate_key(new) < candidate_key(old)


def merge_memories(local: WorkingMemory, received: WorkingMemory):
    """Reconcile gossip state: per entry keep the higher revision (tie keeps
    local); candidate replaced per candidate_better. Returns (merged, changed)."""
    merged = WorkingMemory(entries=dict(local.entries), best_candidate=local.best_candidate)
    changed = False
    for aid, (values, rev) in received.entries.items():
        cur = merged.entries.get(aid)
        if cur is None or rev > cur[1]:
            merged.entries[aid] = (tuple(values), rev)
            changed = True
    if candidate_better(received.best_candidate, merged.best_candidate):
        merged.best_candidate = received.best_candidate
        changed = True
    return merged, changed


def aggregate_of(assignment: dict, slots: int):
    agg = [0.0] * slots
    for values in assignment.values():
        for t, v in enumerate(values):
            agg[t] += v
    return agg


@dataclass
class ClusterSchedule:
    assignment: dict  # agent id -> tuple of kW values
    aggregate: list


class NegotiationAgent:
    """One community participant. Owns one or more units (after task
    reassignment) whose candidate sets are cross-summed into its feasible set."""

    def __init__(self, agent_id, unit, target, is_compromised=False):
        self.agent_id = agent_id
        self.units = [unit]
        self.feasible = [tuple(s) for s in unit.feasible_schedules]
        self.target = list(target)
        self.is_compromised = is_compromised
        self.neighbors = set()
        self.topology_generation = 0
        self.blacklist = set()
        self.memory = WorkingMemory()
        self._jitter = {}
        self.dirty = False  # merged new information, response still pending

    # --- task reassignment ---
    def adopt_unit(self, unit):
        self.units.append(unit)
        self._rebuild_feasible(self._jitter)

    def _rebuild_feasible(self, jitter_by_unit):
        """Cross-sum of the owned units' candidate sets, each scaled by its
        per-interval availability factor and snapped back to the setpoint
        grid (hardware can only realize grid levels)."""
        sets = []
        for unit in self.units:
            f = jitter_by_unit.get(unit.unit_id, 1.0)
            sets.append([tuple(quantize(v * f) for v in s) for s in unit.feasible_schedules])
        feasible = sets[0]
        for nxt in sets[1:]:
            feasible = [tuple(a + b for a, b in zip(s1, s2)) for s1 in feasible for s2 in nxt]
        self.feasible = feasible

    # --- episode protocol ---
    def reset_for_interval(self, jitter_by_unit=None):
        self.memory = WorkingMemory()
        self.dirty = False
        if jitter_by_unit is not None:
            self._jitter = dict(jitter_by_unit)
            self._rebuild_feasible(self._jitter)

    def initiate(self, kernel):
        self._ensure_own_entry()
        self._best_respond(kernel)
        self._broadcast(kernel)

    def handle(self, kernel, msg):
        """Fold one incoming update into the working memory. The response is
        deferred to the end of the tick (see `respond`), so a whole round of
        simultaneous arrivals is answered with a single broadcast."""
        if msg.kind != "WorkingMemoryUpdate":
            return
        if msg.sender in self.blacklist:
            return
        received = decode_memory(msg.content, drop=self.blacklist, target=self.target)
        merged, changed = merge_memories(self.memory, received)
        self.memory = merged
        if changed:
            self.dirty = True

    def respond(self, kernel):
        """Re-derive the best response after merges and broadcast the memory."""
        self.dirty = False
        self._ensure_own_entry()
        self._best_respond(kernel)
        self._broadcast(kernel)

    # --- controller hooks ---
    def exclude_local(self, suspect):
        """Drop a blacklisted agent from memory and the neighbor set."""
        if suspect in self.blacklist:
            return False
        self.blacklist.add(suspect)
        self.neighbors.discard(suspect)
        self.memory.entries.pop(suspect, None)
        best = self.memory.best_candidate
        if best is not None and suspect in best.assignment:
            assignment = {a: v for a, v in best.assignment.items() if a != suspect}
            if assignment:
                agg = aggregate_of(assignment, len(self.target))
                self.memory.best_candidate = Candidate(assignment,
                                                       objective(agg, self.target),
                                                       stamp=best.stamp)
            else:
                self.memory.best_candidate = None
        return True

    def adopt_topology(self, generation, neighbors, excluded):
        """Stale pushes (generation not above the current one) are discarded."""
        if generation <= self.topology_generation:
            return False
        self.topology_generation = generation
        self.neighbors = set(neighbors) - {self.agent_id}
        for suspect in excluded:
            self.exclude_local(suspect)
        return True

    # --- internals ---
    def _others_aggregate(self):
        agg = [0.0] * len(self.target)
        for aid, (values, _) in self.memory.entries.items():
            if aid == self.agent_id:
                continue
            for t, v in enumerate(values):
                agg[t] += v
        return agg

    def _ensure_own_entry(self):
        if self.agent_id not in self.memory.entries:
            idx = choose_best_schedule(self.feasible, self._others_aggregate(), self.target)
            self.memory.entries[self.agent_id] = (self.feasible[idx], 0)

    def _set_own(self, values):
        cur_values, rev = self.memory.entries[self.agent_id]
        if tuple(values) != tuple(cur_values):
            self.memory.entries[self.agent_id] = (tuple(values), rev + 1)
            return True
        return False

    def _best_respond(self, kernel):
        """Build a candidate from the current system view plus own best
        response; keep it if it beats the known best; then pin the own
        commitment to the best candidate. The commitment only moves with a
        candidate improvement, so episodes quiesce without ping-pong, and a
        candidate value outside the feasible set (corrupted gossip) is never
        adopted as the own commitment."""
        others = self._others_aggregate()
        idx = choose_best_schedule(self.feasible, others, self.target)
        assignment = {aid: tuple(v) for aid, (v, _) in self.memory.entries.items()}
        assignment[self.agent_id] = self.feasible[idx]
        agg = aggregate_of(assignment, len(self.target))
        cand = Candidate(assignment, objective(agg, self.target),
                         stamp=(kernel.clock, self.agent_id))
        changed = False
        if candidate_better(cand, self.memory.best_candidate):
            self.memory.best_candidate = cand
            changed = True
        best_own = self.memory.best_candidate.assignment.get(self.agent_id)
        if best_own is not None and tuple(best_own) in self._feasible_set():
            changed = self._set_own(best_own) or changed
        return changed

    def _feasible_set(self):
        if getattr(self, "_feasible_cache_src", None) is not self.feasible:
            self._feasible_cache = set(self.feasible)
            self._feasible_cache_src = self.feasible
        return self._feasible_cache

    def _broadcast(self, kernel):
        content = encode_memory(self.memory)
        for nb in sorted(self.neighbors):
            kernel.send(self.agent_id, nb, "WorkingMemoryUpdate", content)

    def own_choice(self):
        entry = self.memory.entries.get(self.agent_id)
        return entry[0] if entry else None


# --- wire encoding of working memories ---

def encode_memory(memory: WorkingMemory) -> dict:
    content = {"entries": {aid: {"values": list(v), "revision": r}
                           for aid, (v, r) in sorted(memory.entries.items())}}
    if memory.best_candidate is not None:
        content["best"] = {
            "assignment": {aid: list(v) for aid, v in sorted(memory.best_candidate.assignment.items())},
            "objective": memory.best_candidate.objective,
            "stamp": list(memory.best_candidate.stamp),
        }
    else:
        content["best"] = None
    return content


def decode_memory(content: dict, drop=(), target=None) -> WorkingMemory:
    entries = {aid: (tuple(e["values"]), e["revision"])
               for aid, e in content.get("entries", {}).items() if aid not in drop}
    best = None
    raw = content.get("best")
    if raw is not None:
        assignment = {aid: tuple(v) for aid, v in raw["assignment"].items() if aid not in drop}
        if assignment:
            obj = raw["objective"]
            if target is not None:
                # never trust the claimed objective: recompute from the
                # assignment, so a candidate whose values were falsified in
                # transit cannot ride on a stale claim
                obj = objective(aggregate_of(assignment, len(target)), target)
            best = Candidate(assignment, obj, stamp=tuple(raw.get("stamp", ())))
    return WorkingMemory(entries=entries, best_candidate=best)


def run_negotiation(interval, kernel, agents, initiator_id, jitter=None):
    """Run one negotiation episode to global quiescence.

    Returns (ClusterSchedule, convergence_ticks, message_count). The cluster
    schedule reflects the schedules the agents actually committed to (their
    own working-memory entries), which in honest operation coincide with the
    consensus best candidate. `jitter` maps unit id to that interval's
    availability factor.
    """
    kernel.current_interval = interval
    start_count = kernel.trace.interval_counts.get(interval, 0)
    active = {aid: ag for aid, ag in agents.items() if aid not in kernel.excluded}
    for ag in active.values():
        ag.reset_for_interval(jitter if jitter is not None else {})
    start_tick = kernel.clock

    def flush(k, tick):
        for aid in sorted(active):
            if active[aid].dirty and aid not in k.excluded:
                active[aid].respond(k)

    kernel.tick_hook = flush
    try:
        if initiator_id in active:
            active[initiator_id].initiate(kernel)
        kernel.run_to_quiescence()
    finally:
        kernel.tick_hook = None
    duration = kernel.clock - start_tick
    count = kernel.trace.interval_counts.get(interval, 0) - start_count
    assignment = {}
    for aid in sorted(active):
        choice = active[aid].own_choice()
        if choice is not None:
            assignment[aid] = choice
    slots = len(next(iter(active.values())).target) if active else 0
    agg = aggregate_of(assignment, slots)
    return ClusterSchedule(assignment, agg), duration, count
