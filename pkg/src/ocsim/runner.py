"""End-to-end simulation: negotiation intervals, attack, observer, controller.

One run executes `num_intervals` negotiation episodes on a single kernel.
The attack falsifies the compromised agent's wire view from the incident
interval on; the observer folds each completed interval's events into anomaly
reports; the controller reacts at the configured control interval (or
immediately when `immediate_react` is set).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import attack as attack_mod
from . import controller as ctrl
from . import negotiation as neg
from . import observer as obs
from .kernel import Kernel
from .metrics import IntervalRecord, classify_phase, compute_margins, evaluate_run
from .model import ScenarioConfig, UnitModel, validate_scenario
from .topology import Topology, build_small_world

CENTRAL_ID = "central"

# convergence durations are reported at the metrics pipeline's telemetry
# resolution (ticks are far finer than any monitoring system samples)
CONVERGENCE_RESOLUTION = 12


def _report_duration(raw_ticks: int) -> int:
    return -(-raw_ticks // CONVERGENCE_RESOLUTION) * CONVERGENCE_RESOLUTION


@dataclass
class RunResult:
    config: ScenarioConfig
    records: list
    trace: object
    reports: list
    actions: list
    blacklist: set
    gossip_completion_tick: int | None
    control_tick: int | None
    margins: object = None
    evaluation: dict = None
    agents: dict = field(default_factory=dict)


class Simulation:
    def __init__(self, config: ScenarioConfig, target=None, tick_cap: int = 500_000,
                 immediate_react: bool = False):
        violations = validate_scenario(config)
        if violations:
            raise ValueError("invalid scenario: " + "; ".join(violations))
        self.config = config
        slots = config.intervals_per_negotiation
        self.target = list(target) if target is not None else [0.0] * slots
        self.immediate_react = immediate_react

        self.agents = {}
        self.unit_types = {}
        self.compromised_id = None
        for spec in config.agents:
            agent = neg.NegotiationAgent(spec.agent_id, spec.unit, self.target,
                                         is_compromised=spec.is_compromised)
            self.agents[spec.agent_id] = agent
            self.unit_types[spec.agent_id] = spec.unit.unit_type
            if spec.is_compromised:
                self.compromised_id = spec.agent_id

        tp = config.topology_params
        self.topology = build_small_world(self.agents, tp.k, tp.rewire_probability,
                                          config.seed)
        for aid, agent in self.agents.items():
            agent.neighbors = set(self.topology.neighbors(aid))

        dm = config.delay_model
        self.kernel = Kernel(config.seed, dm.min_ticks, dm.max_ticks, tick_cap=tick_cap)
        for aid in self.agents:
            self.kernel.register(aid, self._agent_handler(aid))
        self.kernel.register(CENTRAL_ID, self._central_handler)
        if self.compromised_id is not None:
            self.kernel.outbound_filter = self._wire_filter

        self.central_blacklist = ctrl.BlacklistState()
        # per-agent lag between learning of a blacklist entry and applying the
        # local exclusion (each local controller re-checks the accusation
        # against its own observer before acting)
        self._react_lag = {aid: random.Random(f"ocsim-react:{config.seed}:{aid}").randint(8, 64)
                           for aid in self.agents}
        self._notice_seen = set()
        self.propagation_log = []
        self.reports = []
        self.actions = []
        self.control_done = False
        self.control_tick = None
        self.gossip_completion_tick = None
        self._interval_event_slices = {}

    # --- message handling ---

    def _wire_filter(self, msg):
        if msg.sender != self.compromised_id:
            return msg
        return attack_mod.tamper(msg, self.config.attack, self.kernel.current_interval)

    def _agent_handler(self, aid):
        agent = self.agents[aid]

        def handler(kernel, msg):
            if msg.kind == "WorkingMemoryUpdate":
                agent.handle(kernel, msg)
            elif msg.kind == "BlacklistNotice":
                suspect = msg.content["suspect"]
                if suspect in agent.blacklist:
                    pass
                elif msg.sender == aid:
                    # own deferred apply timer: the local check is done
                    agent.exclude_local(suspect)
                    # anything merged so far may have been laundered through
                    # the compromised agent, so the conservative reaction is
                    # to drop the working memory and re-negotiate from the own
                    # entry (revision bumped so peers take the restart
                    # seriously); this churn is the cost of decentralized
                    # mitigation
                    own = agent.memory.entries.get(aid)
                    agent.memory = neg.WorkingMemory()
                    if own is not None:
                        agent.memory.entries[aid] = (own[0], own[1] + 1)
                    agent.dirty = True
                elif (aid, suspect) not in self._notice_seen:
                    # first time hearing the accusation: gossip it on at once,
                    # but apply the exclusion only after the local controller
                    # has re-checked it against its own observer
                    self._notice_seen.add((aid, suspect))
                    self.propagation_log.append((msg.sender, aid, kernel.clock))
                    for nb in sorted(agent.neighbors - {suspect}):
                        kernel.send(aid, nb, "BlacklistNotice", {"suspect": suspect})
                    kernel.send(aid, aid, "BlacklistNotice", {"suspect": suspect},
                                delay=self._react_lag[aid])
            elif msg.kind == "TopologyPush":
                agent.adopt_topology(msg.content["generation"],
                                     msg.content["adjacency"].get(aid, []),
                                     msg.content["excluded"])
            elif msg.kind == "TaskHandover":
                unit = UnitModel(unit_id=msg.content["unit_id"],
                                 unit_type=msg.content["unit_type"],
                                 feasible_schedules=[tuple(s) for s in msg.content["schedules"]])
                agent.adopt_unit(unit)
        return handler

    def _central_handler(self, kernel, msg):
        if msg.kind == "EscalationReport":
            report = obs.AnomalyReport(suspect=msg.content["suspect"],
                                       first_flagged_interval=msg.content["interval"],
                                       score=msg.content["score"], detector=msg.content["detector"],
                                       scope=None)
            self._central_react(report)

    def _central_react(self, report):
        suspect_agent = self.agents.get(report.suspect)
        suspect_unit = suspect_agent.units[0] if suspect_agent else None
        load = {aid: len(a.units) for aid, a in self.agents.items()}
        actions = ctrl.centralized_react(
            report, self.topology, self.central_blacklist, load, suspect_unit,
            tick=self.kernel.clock, seed=self.config.seed)
        self.actions.extend(actions)
        for action in actions:
            if action.kind == "TopologyPush":
                self.topology = action.topology
                adjacency = {a: sorted(action.topology.neighbors(a))
                             for a in sorted(action.topology.nodes)}
                content = {"generation": action.topology.generation,
                           "adjacency": adjacency,
                           "excluded": sorted(self.central_blacklist.excluded)}
                for aid in sorted(action.topology.nodes):
                    self.kernel.send(CENTRAL_ID, aid, "TopologyPush", content)
            elif action.kind == "TaskReassignment":
                # custodial handover: the new owner runs the orphaned unit on
                # its reference schedule; without the unit's local controller
                # it cannot exploit the full flexibility range
                unit = suspect_unit
                self.kernel.send(CENTRAL_ID, action.new_owner, "TaskHandover",
                                 {"unit_id": unit.unit_id, "unit_type": unit.unit_type,
                                  "schedules": [list(unit.feasible_schedules[0])]})

    # --- per-interval unit availability ---

    # cycling volatility pattern (calm and turbulent quarter-hours alternate,
    # like a day profile): the per-interval span scales how far each unit's
    # availability strays from its base
    JITTER_SPANS = (0.02, 0.12, 0.06, 0.09, 0.04)

    def _interval_jitter(self, interval):
        """Availability factor per unit and interval (weather, demand drift),
        from a dedicated seeded stream. Storage is not weather-bound, so
        batteries keep their nominal ladder."""
        span = self.JITTER_SPANS[interval % len(self.JITTER_SPANS)]
        jitter = {}
        for agent in self.agents.values():
            for unit in agent.units:
                if unit.unit_type == "Battery":
                    continue
                rng = random.Random(f"ocsim-jitter:{self.config.seed}:{interval}:{unit.unit_id}")
                jitter[unit.unit_id] = 1.0 + rng.uniform(-span, span)
        return jitter

    # --- observer ---

    def _constraints_map(self):
        return {aid: tuple(agent.feasible) for aid, agent in self.agents.items()}

    def _interval_events(self, interval):
        lo, hi = self._interval_event_slices[interval]
        return [e for e in self.kernel.trace.events[lo:hi] if e.delivered]

    def _training_events(self):
        out = []
        for i in range(self.config.incident_interval):
            if i in self._interval_event_slices:
                out.extend(self._interval_events(i))
        return out

    def _run_detection(self, interval):
        cfg = self.config
        detection = self._interval_events(interval)
        training = self._training_events()
        constraints = self._constraints_map()
        if cfg.observer_arch == "MultiLeveled":
            new = obs.run_multi_leveled(training, detection, list(self.agents),
                                        self.unit_types, constraints, cfg.seed)
        else:
            new = obs.run_observer(cfg.observer_arch, cfg.info_level, training, detection,
                                   list(self.agents), self.unit_types, constraints, cfg.seed)
        known = {r.suspect for r in self.reports}
        self.reports.extend(r for r in new if r.suspect not in known)

    # --- controller ---

    def _select_report(self):
        """Pick the report to act on. A constraint violation is proof of
        falsified values; statistical flags may also hit honest agents that
        legitimately adjusted to the falsified data, so constraint reports
        take precedence."""
        pending = [r for r in self.reports
                   if r.suspect not in self.central_blacklist.excluded]
        if not pending:
            return None
        priority = {"constraint": 0, "robust_z": 1, "traffic": 2}
        return min(pending, key=lambda r: (priority.get(r.detector, 3),
                                           r.first_flagged_interval, r.suspect))

    def _finish_exclusion(self):
        """Cut the suspects off the bus once the controllers are done."""
        excluded = set(self.central_blacklist.excluded)
        for agent in self.agents.values():
            excluded |= agent.blacklist
        self.kernel.excluded.update(excluded)
        self.control_done = True

    def _apply_control_centralized(self, report):
        """Clean cutover: the central instance can coordinate globally, so the
        topology push and task handover run in a short sub-phase before the
        next episode starts."""
        self.control_tick = self.kernel.clock
        self._central_react(report)
        self.kernel.run_to_quiescence()
        self.gossip_completion_tick = self.kernel.clock
        self._finish_exclusion()

    # ticks between a decentralized controller's decision and its first
    # notices hitting the wire (observer cross-check before acting)
    REACTION_LATENCY = 12

    def _apply_control_decentralized(self, report):
        """A decentralized reaction has no global synchronisation point: the
        blacklist gossip spreads peer to peer, each local controller applies
        the exclusion after its own verification lag and drops its working
        memory, and the community re-negotiates from scratch. All of that
        extra traffic lands in the current interval's message count — the
        decentralized mitigation is visible on the bus, not in the quality of
        the next consensus."""
        arch = self.config.controller_arch
        kernel = self.kernel
        self.control_tick = kernel.clock
        host = self._detection_host(report.suspect)
        if host is None:
            self._finish_exclusion()
            return
        if arch == "Decentralized":
            actions = ctrl.decentralized_react(report, host, tick=kernel.clock)
        else:  # MultiLeveled
            actions = ctrl.multi_leveled_react(report, host, tick=kernel.clock,
                                               central_id=CENTRAL_ID)
        self.actions.extend(actions)
        for action in actions:
            if action.kind == "BlacklistNotice":
                kernel.send(host.agent_id, action.target, "BlacklistNotice",
                            {"suspect": report.suspect},
                            delay=self.REACTION_LATENCY)
            elif action.kind == "EscalationReport":
                kernel.send(host.agent_id, CENTRAL_ID, "EscalationReport",
                            {"suspect": report.suspect,
                             "interval": report.first_flagged_interval,
                             "score": report.score,
                             "detector": report.detector},
                            delay=self.REACTION_LATENCY)

        def flush(k, tick):
            for aid in sorted(self.agents):
                agent = self.agents[aid]
                if agent.dirty and aid not in k.excluded:
                    agent.respond(k)

        kernel.tick_hook = flush
        try:
            kernel.run_to_quiescence()
        finally:
            kernel.tick_hook = None
        self.gossip_completion_tick = kernel.clock
        self._finish_exclusion()

    def _detection_host(self, suspect):
        """The decentralized reaction starts at the controller co-located with
        the observer nearest the anomaly: the suspect's lowest-id honest
        neighbor."""
        neighbors = sorted(self.topology.neighbors(suspect) - {suspect}
                           - self.central_blacklist.excluded)
        neighbors = [n for n in neighbors if n not in self.kernel.excluded]
        if neighbors:
            return self.agents[neighbors[0]]
        others = sorted(set(self.agents) - {suspect} - self.kernel.excluded)
        return self.agents[others[0]] if others else None

    # --- main loop ---

    def run(self) -> RunResult:
        cfg = self.config
        records = []
        for interval in range(cfg.num_intervals):
            self.kernel.current_interval = interval
            trace_start = len(self.kernel.trace.events)
            react_now = self.immediate_react and self.reports
            if (interval >= cfg.control_interval or react_now) and not self.control_done:
                report = self._select_report()
                if report is not None and cfg.controller_arch != "None":
                    if cfg.controller_arch == "Centralized":
                        self._apply_control_centralized(report)
                    else:
                        self._apply_control_decentralized(report)
            active = sorted(set(self.agents) - self.kernel.excluded)
            rng = random.Random(f"ocsim-init:{cfg.seed}:{interval}")
            initiator = rng.choice(active)
            jitter = self._interval_jitter(interval)
            cluster, duration, count = neg.run_negotiation(interval, self.kernel,
                                                           self.agents, initiator,
                                                           jitter=jitter)
            self._interval_event_slices[interval] = (trace_start, len(self.kernel.trace.events))
            blacklist_now = set(self.central_blacklist.excluded)
            for ag in self.agents.values():
                blacklist_now |= ag.blacklist
            committed = {aid: v for aid, v in cluster.assignment.items()
                         if aid not in blacklist_now}
            aggregate = neg.aggregate_of(committed, len(self.target))
            quality = neg.objective(aggregate, self.target)
            records.append(IntervalRecord(
                interval=interval, convergence_ticks=_report_duration(duration),
                solution_quality=quality,
                message_count=self.kernel.trace.interval_counts.get(interval, 0),
                phase=classify_phase(interval, cfg)))
            if interval >= cfg.incident_interval and not self.control_done and not self.reports:
                self._run_detection(interval)
        margins = compute_margins([r for r in records if r.phase == "Normal"])
        evaluation = evaluate_run(records, margins)
        blacklist = set(self.central_blacklist.excluded)
        for agent in self.agents.values():
            blacklist |= agent.blacklist
        return RunResult(config=cfg, records=records, trace=self.kernel.trace,
                         reports=self.reports, actions=self.actions, blacklist=blacklist,
                         gossip_completion_tick=self.gossip_completion_tick,
                         control_tick=self.control_tick, margins=margins,
                         evaluation=evaluation, agents=self.agents)


def run_scenario(config: ScenarioConfig, **kwargs) -> RunResult:
    return Simulation(config, **kwargs).run()
