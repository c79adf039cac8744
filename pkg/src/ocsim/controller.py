"""Controller actions and the three mitigation architectures.

Actions: isolate compromised assets,
adapt the communication topology, reassign the excluded agent's task.
The centralized controller pushes a rebuilt topology and reassigns the unit;
the decentralized controller gossips blacklist notices through the neighbor
graph; the multi-leveled controller does both, escalating to the central
instance over the ordinary message bus.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .topology import Topology, rebuild_excluding, DegradedSystemError


@dataclass
class ControlAction:
    kind: str  # ExcludeLocal | BlacklistNotice | TopologyPush | TaskReassignment | EscalationReport
    issuer: str
    issued_tick: int
    target: str | None = None          # suspect or recipient agent
    topology: Topology | None = None   # for TopologyPush
    unit_id: str | None = None         # for TaskReassignment
    new_owner: str | None = None       # for TaskReassignment


@dataclass
class BlacklistState:
    excluded: set = field(default_factory=set)
    propagation_log: list = field(default_factory=list)  # (informer, informed, tick)

    def add(self, suspect) -> bool:
        if suspect in self.excluded:
            return False
        self.excluded.add(suspect)
        return True


def reassign_task(unit, candidates, load_by_agent) -> str:
    """Deterministic new owner: the candidate managing the fewest units,
    ties broken lexicographically."""
    candidates = sorted(candidates)
    if not candidates:
        raise DegradedSystemError("no candidate agents left for task reassignment")
    return min(candidates, key=lambda a: (load_by_agent.get(a, 0), a))


def centralized_react(report, topology: Topology, blacklist: BlacklistState,
                      load_by_agent: dict, suspect_unit, issuer="central",
                      tick=0, seed=None) -> list:
    """One topology push over the survivors plus one task reassignment.

    Re-reports about an already blacklisted suspect are idempotent (no
    duplicate actions)."""
    suspect = report.suspect
    if not blacklist.add(suspect):
        return []
    survivors = sorted(topology.nodes - blacklist.excluded)
    if len(survivors) < 2:
        raise DegradedSystemError(f"only {len(survivors)} agents remain after exclusion")
    new_topology = rebuild_excluding(topology, blacklist.excluded, seed=seed)
    actions = [ControlAction(kind="TopologyPush", issuer=issuer, issued_tick=tick,
                             topology=new_topology)]
    if suspect_unit is not None:
        owner = reassign_task(suspect_unit, survivors, load_by_agent)
        actions.append(ControlAction(kind="TaskReassignment", issuer=issuer, issued_tick=tick,
                                     unit_id=suspect_unit.unit_id, new_owner=owner))
    return actions


def decentralized_react(report, agent, tick=0) -> list:
    """Local exclusion plus one blacklist notice per current neighbor.

    Gossip forwarding on first learning is handled by the agents' notice
    handlers; known entries are never re-forwarded, which bounds the total
    notice count by edges x suspects."""
    suspect = report.suspect
    actions = []
    neighbors = sorted(agent.neighbors - {suspect})
    if agent.exclude_local(suspect):
        actions.append(ControlAction(kind="ExcludeLocal", issuer=agent.agent_id,
                                     issued_tick=tick, target=suspect))
        for nb in neighbors:
            actions.append(ControlAction(kind="BlacklistNotice", issuer=agent.agent_id,
                                         issued_tick=tick, target=nb))
    return actions


def multi_leveled_react(report, agent, tick=0, central_id="central") -> list:
    """Decentralized reaction plus one escalation to the central controller."""
    actions = decentralized_react(report, agent, tick=tick)
    if actions:
        actions.append(ControlAction(kind="EscalationReport", issuer=agent.agent_id,
                                     issued_tick=tick, target=central_id))
    return actions


def export_actions_jsonl(actions, path) -> None:
    with open(path, "w") as f:
        for a in actions:
            f.write(json.dumps({"kind": a.kind, "issuer": a.issuer,
                                "issued_tick": a.issued_tick, "target": a.target,
                                "unit_id": a.unit_id, "new_owner": a.new_owner,
                                "topology_generation": a.topology.generation if a.topology else None},
                               sort_keys=True))
            f.write("\n")
