import random
from statistics import median

import pytest

from ocsim import observer as obs
from ocsim.kernel import Message, TraceEvent

SLOTS = 4


def _event(sender, values, interval, tick=0, delay=2, receiver="a01"):
    content = {"entries": {sender: {"values": list(values), "revision": 0}}}
    msg = Message(msg_id=tick, sender=sender, receiver=receiver,
                  sent_tick=tick, delivered_tick=tick + delay,
                  kind="WorkingMemoryUpdate", content=content, interval=interval)
    return TraceEvent(tick=tick + delay, message=msg, delivered=True)


def _series(sender, level, value_by_interval, **kwargs):
    events = [_event(sender, [v] * SLOTS, interval, tick=10 * interval)
              for interval, v in sorted(value_by_interval.items())]
    return obs.build_observations(events, level, **kwargs)


# --- projection ---

def test_projection_reveals_fields_cumulatively():
    e = _event("a00", [1.0] * SLOTS, interval=3, tick=5, delay=2)
    by_level = {lvl: obs.project(e, lvl, traffic_count=7,
                                 constraints=[(1.0,) * SLOTS])
                for lvl in (1, 2, 3, 4)}
    assert by_level[1].present_fields() == {"sender", "timestamp"}
    assert by_level[2].delay_ticks == 2 and by_level[2].traffic_window_count == 7
    assert by_level[2].content_values is None
    assert by_level[3].content_values == (1.0,) * SLOTS
    assert by_level[3].unit_constraints is None
    assert by_level[4].unit_constraints == ((1.0,) * SLOTS,)
    for lvl, o in by_level.items():
        assert o.present_fields() >= set(obs.LEVEL_FIELDS[1])


def test_projection_rejects_unknown_level():
    e = _event("a00", [1.0] * SLOTS, interval=0)
    with pytest.raises(ValueError):
        obs.project(e, 5)


def test_scope_filter_restricts_to_members():
    observations = _series("a00", 1, {i: 1.0 for i in range(6)}) \
        + _series("a01", 1, {i: 1.0 for i in range(6)})
    scope = obs.ObserverScope("Decentralized", frozenset({"a00"}), label="a00")
    assert {o.sender for o in obs.scope_filter(observations, scope)} == {"a00"}


# --- statistical detector ---

def test_training_model_matches_hand_computed_median_mad():
    values = [1.0, 1.2, 0.8, 1.1, 0.9, 1.0]
    training = _series("a00", 3, dict(enumerate(values)))
    model = obs.train_statistical(training)
    med = median(values)
    mad = median(abs(v - med) for v in values)
    expected_spread = max(1.4826 * mad,
                          0.5 * (max(values) - min(values)),
                          obs.Z_SPREAD_FLOOR)
    for t in range(SLOTS):
        got_med, got_spread = model[("a00", t)]
        assert got_med == pytest.approx(med)
        assert got_spread == pytest.approx(expected_spread)


def test_training_requires_enough_intervals():
    training = _series("a00", 3, {0: 1.0, 1: 1.0})
    with pytest.raises(obs.InsufficientTrainingError):
        obs.train_statistical(training)


def _jittered_training(sender, base, n=20, sigma=0.01, seed="obs"):
    rng = random.Random(seed)
    return _series(sender, 3,
                   {i: base + rng.gauss(0, sigma) for i in range(n)})


def test_gross_deviation_is_flagged():
    training = _jittered_training("a00", base=1.0)
    detect = _series("a00", 3, {20: 10.0, 21: 10.0})
    reports = obs.detect_statistical(detect, training)
    assert [r.suspect for r in reports] == ["a00"]
    assert reports[0].detector == "robust_z"
    assert reports[0].score > obs.Z_THRESHOLD


def test_single_spike_is_not_flagged():
    training = _jittered_training("a00", base=1.0)
    detect = _series("a00", 3, {20: 10.0, 21: 1.0, 22: 10.0})
    assert obs.detect_statistical(detect, training) == []


def test_wide_operating_range_widens_the_tolerance():
    """A unit that legitimately swept a wide ladder during training must be
    allowed the same swings during detection."""
    ladder = {i: -7.0 + 1.75 * (i % 9) for i in range(18)}
    training = _series("a00", 3, ladder)
    detect = _series("a00", 3, {20: 7.0, 21: 7.0, 22: -7.0, 23: -7.0})
    assert obs.detect_statistical(detect, training) == []


def test_stable_sender_keeps_a_tight_tolerance():
    training = _jittered_training("a00", base=2.0)
    detect = _series("a00", 3, {20: 6.0, 21: 6.0})  # 3x scaling signature
    assert [r.suspect for r in obs.detect_statistical(detect, training)] == ["a00"]


# --- constraint detector ---

def test_feasible_values_within_epsilon_are_not_flagged():
    constraints = [(1.0,) * SLOTS, (2.0,) * SLOTS]
    eps = obs.CONSTRAINT_EPSILON
    events = [_event("a00", [1.0 + eps / 2] * SLOTS, 20)]
    observations = obs.build_observations(events, 4, {"a00": constraints})
    assert obs.detect_constraint(observations) == []


def test_infeasible_values_are_flagged_with_distance_score():
    constraints = [(1.0,) * SLOTS, (2.0,) * SLOTS]
    events = [_event("a00", [3.0] * SLOTS, 20)]
    observations = obs.build_observations(events, 4, {"a00": constraints})
    reports = obs.detect_constraint(observations)
    assert [r.suspect for r in reports] == ["a00"]
    assert reports[0].detector == "constraint"
    assert reports[0].score == pytest.approx(1.0)  # distance to nearest schedule


# --- traffic detector ---

def test_rate_blowup_is_flagged():
    training = []
    for interval in range(6):
        training += [_event("a00", [1.0] * SLOTS, interval, tick=10 * interval + j)
                     for j in range(3)]
    train_obs = obs.build_observations(training, 2)
    burst = [_event("a00", [1.0] * SLOTS, 20, tick=200 + j) for j in range(30)]
    reports = obs.detect_traffic(obs.build_observations(burst, 2), train_obs)
    assert [r.suspect for r in reports] == ["a00"]
    assert reports[0].detector == "traffic"


def test_unknown_sender_is_flagged():
    train_obs = obs.build_observations(
        [_event("a00", [1.0] * SLOTS, i) for i in range(6)], 2)
    detect = obs.build_observations([_event("ghost", [1.0] * SLOTS, 20)], 2)
    assert [r.suspect for r in obs.detect_traffic(detect, train_obs)] == ["ghost"]


def test_normal_traffic_passes():
    mk = lambda lo, hi: [_event("a00", [1.0] * SLOTS, i, tick=10 * i + j)
                         for i in range(lo, hi) for j in range(3)]
    train_obs = obs.build_observations(mk(0, 6), 2)
    detect = obs.build_observations(mk(20, 22), 2)
    assert obs.detect_traffic(detect, train_obs) == []


# --- level blindness ---

def test_levels_below_three_cannot_see_content_tampering():
    """A value-injection attack that leaves rates and delays untouched is
    invisible to detectors restricted to levels 1-2."""
    honest = [_event("a00", [1.0] * SLOTS, i, tick=10 * i + j)
              for i in range(25) for j in range(3)]
    tampered = [_event(e.message.sender,
                       [v * 3.0 for v in
                        e.message.content["entries"]["a00"]["values"]]
                       if e.message.interval >= 20 else
                       e.message.content["entries"]["a00"]["values"],
                       e.message.interval, tick=e.message.sent_tick)
                for e in honest]
    for level in (1, 2):
        split = lambda evs: ([e for e in evs if e.message.interval < 20],
                             [e for e in evs if e.message.interval >= 20])
        out = []
        for events in (honest, tampered):
            train, detect = split(events)
            out.append(obs.detect_traffic(obs.build_observations(detect, level),
                                          obs.build_observations(train, level)))
        assert out[0] == out[1] == []


# --- scopes, dedup, dispatch ---

def test_scope_construction_covers_all_architectures():
    ids = [f"a{i:02d}" for i in range(8)]
    types = {aid: ("Battery" if i % 2 else "PV") for i, aid in enumerate(ids)}
    central = obs.make_scopes("Centralized", ids, types, seed=1)
    assert len(central) == 1 and central[0].members == frozenset(ids)
    decentralized = obs.make_scopes("Decentralized", ids, types, seed=1)
    assert len(decentralized) == 8
    assert all(len(s.members) == 1 for s in decentralized)
    by_type = obs.make_scopes("GroupedByType", ids, types, seed=1)
    assert {s.label for s in by_type} == {"Battery", "PV"}
    grouped = obs.make_scopes("GroupedRandom", ids, types, seed=1)
    union = frozenset().union(*(s.members for s in grouped))
    assert union == frozenset(ids)
    assert sum(len(s.members) for s in grouped) == len(ids)  # a partition
    with pytest.raises(ValueError):
        obs.make_scopes("Panopticon", ids, types, seed=1)


def test_dedup_prefers_earliest_then_strongest_evidence():
    scope = obs.ObserverScope("Centralized", frozenset({"a00"}))
    mk = lambda interval, detector: obs.AnomalyReport(
        suspect="a00", first_flagged_interval=interval, score=1.0,
        detector=detector, scope=scope)
    out = obs.dedup_reports([mk(22, "constraint"), mk(21, "robust_z")])
    assert len(out) == 1 and out[0].detector == "robust_z"  # earlier wins
    out = obs.dedup_reports([mk(21, "robust_z"), mk(21, "constraint")])
    assert out[0].detector == "constraint"  # tie: proof beats symptom


def test_reports_export_jsonl(tmp_path):
    scope = obs.ObserverScope("Decentralized", frozenset({"a00"}), label="a00")
    report = obs.AnomalyReport(suspect="a00", first_flagged_interval=21,
                               score=8.5, detector="robust_z", scope=scope)
    path = tmp_path / "reports.jsonl"
    obs.export_reports_jsonl([report], path)
    assert '"suspect": "a00"' in path.read_text()
