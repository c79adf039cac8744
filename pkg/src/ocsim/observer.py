"""Observers: information-level projection, scope filtering, anomaly detectors.

Information levels are cumulative projections of a message event:
  1: sender and timestamp
  2: + communication data (delay, per-interval traffic of the sender)
  3: + message content (the sender's reported power values)
  4: + unit constraints (digest of the sender's feasible schedules)

Detectors are deterministic folds over an ordered observation stream. The
shipped references are a rate/delay margin check (levels 1-2), a robust
z-score check on reported values (level 3+), and a feasibility check against
the unit constraints (level 4). Any callable with the same signature can be
plugged in instead.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import median

LEVEL_FIELDS = {
    1: ("sender", "timestamp"),
    2: ("sender", "timestamp", "delay_ticks", "traffic_window_count"),
    3: ("sender", "timestamp", "delay_ticks", "traffic_window_count", "content_values"),
    4: ("sender", "timestamp", "delay_ticks", "traffic_window_count", "content_values",
        "unit_constraints"),
}

# detector constants (fixed; unspecified upstream)
Z_THRESHOLD = 5.0
Z_CONSECUTIVE = 2
Z_SPREAD_FLOOR = 0.25  # kW; guards against degenerate training spread
CONSTRAINT_EPSILON = 1e-6  # kW per slot
MIN_TRAINING_INTERVALS = 5
RATE_FACTOR = 2.0
RATE_SLACK = 4
DELAY_SLACK = 2.0


class InsufficientTrainingError(RuntimeError):
    pass


@dataclass
class Observation:
    level: int
    sender: str
    timestamp: int
    interval: int
    delay_ticks: int | None = None
    traffic_window_count: int | None = None
    content_values: tuple | None = None
    unit_constraints: tuple | None = None

    def present_fields(self):
        fields = {"sender", "timestamp"}
        if self.delay_ticks is not None:
            fields.add("delay_ticks")
        if self.traffic_window_count is not None:
            fields.add("traffic_window_count")
        if self.content_values is not None:
            fields.add("content_values")
        if self.unit_constraints is not None:
            fields.add("unit_constraints")
        return fields


@dataclass(frozen=True)
class ObserverScope:
    kind: str  # Centralized | Decentralized | GroupedByType | GroupedRandom
    members: frozenset
    label: str = ""

    def describe(self):
        return f"{self.kind}({self.label})" if self.label else self.kind


@dataclass
class AnomalyReport:
    suspect: str
    first_flagged_interval: int
    score: float
    detector: str
    scope: ObserverScope


def _own_values(event_content: dict, sender: str):
    entry = event_content.get("entries", {}).get(sender)
    if entry is None:
        return None
    return tuple(entry["values"])


def project(event, level: int, traffic_count=None, constraints=None) -> Observation:
    """Project a delivered trace event down to one information level.

    `traffic_count` is the sender's message count in the event's interval;
    `constraints` is the sender's feasible-schedule digest. Both are only
    attached at the levels that may see them.
    """
    if level not in (1, 2, 3, 4):
        raise ValueError(f"information level must be in 1..4, got {level}")
    msg = event.message
    obs = Observation(level=level, sender=msg.sender, timestamp=msg.delivered_tick,
                      interval=msg.interval)
    if level >= 2:
        obs.delay_ticks = msg.delivered_tick - msg.sent_tick
        obs.traffic_window_count = traffic_count
    if level >= 3:
        obs.content_values = _own_values(msg.content, msg.sender)
    if level >= 4:
        obs.unit_constraints = tuple(tuple(s) for s in constraints) if constraints else None
    return obs


def scope_filter(observations, scope: ObserverScope):
    return [o for o in observations if o.sender in scope.members]


def build_observations(trace_events, level, constraints_by_sender=None):
    """Fold a list of delivered trace events into level-projected observations.

    Only negotiation traffic carries power values; control messages still
    count for levels 1-2 (they are visible communication events).
    """
    per_sender_interval = {}
    for e in trace_events:
        key = (e.message.sender, e.message.interval)
        per_sender_interval[key] = per_sender_interval.get(key, 0) + 1
    out = []
    for e in trace_events:
        constraints = None
        if constraints_by_sender:
            constraints = constraints_by_sender.get((e.message.sender, e.message.interval)) \
                or constraints_by_sender.get(e.message.sender)
        out.append(project(e, level,
                           traffic_count=per_sender_interval[(e.message.sender, e.message.interval)],
                           constraints=constraints))
    return out


# --- detectors ---

def detect_constraint(observations, scope=None) -> list:
    """Level 4: flag senders whose reported values match no feasible schedule
    within the per-slot tolerance."""
    reports = {}
    for obs in observations:
        if obs.content_values is None or obs.unit_constraints is None:
            continue
        dist = min(max(abs(a - b) for a, b in zip(obs.content_values, sched))
                   for sched in obs.unit_constraints)
        if dist > CONSTRAINT_EPSILON and obs.sender not in reports:
            reports[obs.sender] = AnomalyReport(
                suspect=obs.sender, first_flagged_interval=obs.interval,
                score=dist, detector="constraint", scope=scope)
    return list(reports.values())


def train_statistical(observations):
    """Per sender and slot, robust location/spread (median, MAD) over a
    normal-operation training window."""
    intervals = {o.interval for o in observations}
    if len(intervals) < MIN_TRAINING_INTERVALS:
        raise InsufficientTrainingError(
            f"need >= {MIN_TRAINING_INTERVALS} training intervals, got {len(intervals)}")
    values = {}
    for o in observations:
        if o.content_values is None:
            continue
        for t, v in enumerate(o.content_values):
            values.setdefault((o.sender, t), []).append(v)
    model = {}
    for key, vs in values.items():
        med = median(vs)
        mad = median(abs(v - med) for v in vs)
        # Units that legitimately swing across a wide operating range during
        # training (e.g. storage rebalancing) get a proportionally wide
        # tolerance; half the observed range bounds normal excursions even
        # when the MAD degenerates to zero.
        half_range = 0.5 * (max(vs) - min(vs))
        model[key] = (med, max(1.4826 * mad, half_range, Z_SPREAD_FLOOR))
    return model


def detect_statistical(observations, training, scope=None) -> list:
    """Level 3+: robust z-score per slot; a sender is flagged after
    Z_CONSECUTIVE consecutive messages with any slot above Z_THRESHOLD."""
    model = train_statistical(training)
    streak = {}
    reports = {}
    for obs in observations:
        if obs.content_values is None:
            continue
        z_max = 0.0
        for t, v in enumerate(obs.content_values):
            stats = model.get((obs.sender, t))
            if stats is None:
                continue
            med, spread = stats
            z_max = max(z_max, abs(v - med) / spread)
        if z_max > Z_THRESHOLD:
            streak[obs.sender] = streak.get(obs.sender, 0) + 1
            if streak[obs.sender] >= Z_CONSECUTIVE and obs.sender not in reports:
                reports[obs.sender] = AnomalyReport(
                    suspect=obs.sender, first_flagged_interval=obs.interval,
                    score=z_max, detector="robust_z", scope=scope)
        else:
            streak[obs.sender] = 0
    return list(reports.values())


def _traffic_profile(observations):
    """Per sender: per-interval message counts and mean delays."""
    counts, delays = {}, {}
    for o in observations:
        counts.setdefault(o.sender, {}).setdefault(o.interval, 0)
        counts[o.sender][o.interval] += 1
        if o.delay_ticks is not None:
            delays.setdefault((o.sender, o.interval), []).append(o.delay_ticks)
    return counts, delays


def detect_traffic(observations, training, scope=None) -> list:
    """Levels 1-2: flag senders whose per-interval message rate or mean delay
    grossly deviates from training margins. Content is never consulted."""
    train_counts, train_delays = _traffic_profile(training)
    rate_bounds, delay_bounds = {}, {}
    for sender, per_int in train_counts.items():
        rates = list(per_int.values())
        rate_bounds[sender] = (min(rates), max(rates))
        means = [sum(vs) / len(vs) for (s, _), vs in train_delays.items() if s == sender]
        if means:
            delay_bounds[sender] = (min(means), max(means))
    obs_counts, obs_delays = _traffic_profile(observations)
    reports = {}

    def flag(sender, interval, score):
        if sender not in reports:
            reports[sender] = AnomalyReport(suspect=sender, first_flagged_interval=interval,
                                            score=score, detector="traffic", scope=scope)

    for sender, per_int in obs_counts.items():
        lo_hi = rate_bounds.get(sender)
        for interval in sorted(per_int):
            rate = per_int[interval]
            if lo_hi is None:
                flag(sender, interval, float(rate))  # unknown sender appearing
                continue
            if rate > RATE_FACTOR * lo_hi[1] + RATE_SLACK:
                flag(sender, interval, float(rate))
            d = obs_delays.get((sender, interval))
            if d and sender in delay_bounds:
                mean_d = sum(d) / len(d)
                dlo, dhi = delay_bounds[sender]
                if not (dlo - DELAY_SLACK <= mean_d <= dhi + DELAY_SLACK):
                    flag(sender, interval, mean_d)
    return list(reports.values())


# --- scope construction and architecture dispatch ---

def make_scopes(arch: str, agent_ids, unit_types: dict, seed) -> list:
    import random
    ids = sorted(agent_ids)
    if arch == "Centralized":
        return [ObserverScope("Centralized", frozenset(ids))]
    if arch == "Decentralized":
        return [ObserverScope("Decentralized", frozenset([a]), label=a) for a in ids]
    if arch == "GroupedByType":
        groups = {}
        for a in ids:
            groups.setdefault(unit_types[a], []).append(a)
        return [ObserverScope("GroupedByType", frozenset(members), label=t)
                for t, members in sorted(groups.items())]
    if arch == "GroupedRandom":
        rng = random.Random(f"ocsim-groups:{seed}")
        shuffled = list(ids)
        rng.shuffle(shuffled)
        n_groups = max(2, len(ids) // 3)
        scopes = []
        for g in range(n_groups):
            members = shuffled[g::n_groups]
            if members:
                scopes.append(ObserverScope("GroupedRandom", frozenset(members), label=f"g{g}"))
        return scopes
    raise ValueError(f"unknown observer architecture {arch!r}")


DETECTOR_RANK = {"constraint": 0, "robust_z": 1, "traffic": 2}


def dedup_reports(reports) -> list:
    """One report per suspect: earliest flagged interval, and on a tie the
    strongest evidence class (a constraint violation is proof of infeasible
    values, a statistical or traffic deviation only a symptom)."""
    best = {}
    for r in reports:
        cur = best.get(r.suspect)
        key = (r.first_flagged_interval, DETECTOR_RANK.get(r.detector, 3))
        if cur is None or key < (cur.first_flagged_interval,
                                 DETECTOR_RANK.get(cur.detector, 3)):
            best[r.suspect] = r
    return [best[s] for s in sorted(best)]


def run_observer(arch, level, training_events, detection_events, agent_ids,
                 unit_types, constraints_by_sender, seed) -> list:
    """Run one architecture at one information level over a trace split into
    a normal-operation training window and a detection window."""
    scopes = make_scopes(arch, agent_ids, unit_types, seed)
    reports = []
    train_obs = build_observations(training_events, level, constraints_by_sender)
    detect_obs = build_observations(detection_events, level, constraints_by_sender)
    for scope in scopes:
        train = scope_filter(train_obs, scope)
        detect = scope_filter(detect_obs, scope)
        if level <= 2:
            reports.extend(detect_traffic(detect, train, scope))
        else:
            reports.extend(detect_statistical(detect, train, scope))
            if level >= 4:
                reports.extend(detect_constraint(detect, scope))
    return dedup_reports(reports)


def run_multi_leveled(training_events, detection_events, agent_ids, unit_types,
                      constraints_by_sender, seed) -> list:
    """Proposed composition: a centralized traffic observer without message
    content (level 2) plus decentralized content/constraint observers
    (level 4), reports deduplicated by suspect."""
    reports = []
    central = make_scopes("Centralized", agent_ids, unit_types, seed)[0]
    train2 = build_observations(training_events, 2)
    detect2 = build_observations(detection_events, 2)
    reports.extend(detect_traffic(scope_filter(detect2, central),
                                  scope_filter(train2, central), central))
    train4 = build_observations(training_events, 4, constraints_by_sender)
    detect4 = build_observations(detection_events, 4, constraints_by_sender)
    for scope in make_scopes("Decentralized", agent_ids, unit_types, seed):
        train = scope_filter(train4, scope)
        detect = scope_filter(detect4, scope)
        reports.extend(detect_statistical(detect, train, scope))
        reports.extend(detect_constraint(detect, scope))
    return dedup_reports(reports)


def export_reports_jsonl(reports, path) -> None:
    with open(path, "w") as f:
        for r in reports:
            f.write(json.dumps({"suspect": r.suspect,
                                "first_flagged_interval": r.first_flagged_interval,
                                "score": r.score, "detector": r.detector,
                                "scope": r.scope.describe() if r.scope else None},
                               sort_keys=True))
            f.write("\n")
