"""Domain model: units, agents, scenario configuration and scenario file I/O.

All power values are in kW, signed: production is negative, consumption is
positive, so perfect self-consumption corresponds to an aggregate of zero.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, asdict
from typing import Optional

UNIT_TYPES = ("Wind", "PV", "Battery", "Household")

# Inverter/charger setpoints are quantized: units can only realize power
# levels on this grid (kW). Everything downstream (schedules, availability
# scaling) snaps to it.
SETPOINT_GRID = 0.25


def quantize(value: float, grid: float = SETPOINT_GRID) -> float:
    """Snap a power value to the setpoint grid (round half away from zero
    is avoided; half always rounds up, deterministically)."""
    return round(math.floor(value / grid + 0.5) * grid, 6)
OBSERVER_ARCHS = ("Centralized", "Decentralized", "GroupedByType", "GroupedRandom", "MultiLeveled")
CONTROLLER_ARCHS = ("None", "Centralized", "Decentralized", "MultiLeveled")
ATTACK_MODES = ("Scale", "Offset", "Replace")

Schedule = tuple  # tuple of floats, length = intervals_per_negotiation


@dataclass
class UnitModel:
    unit_id: str
    unit_type: str
    feasible_schedules: list  # non-empty list of Schedule


@dataclass
class AgentSpec:
    agent_id: str
    unit: UnitModel
    is_compromised: bool = False


@dataclass
class AttackConfig:
    mode: str = "Scale"
    scale_factor: float = 3.0
    offset_kw: float = 0.0
    replacement: Optional[list] = None
    active_from_interval: int = 20


@dataclass
class TopologyParams:
    k: int = 4
    rewire_probability: float = 0.1


@dataclass
class DelayModel:
    min_ticks: int = 1
    max_ticks: int = 5


@dataclass
class ScenarioConfig:
    seed: int
    num_intervals: int = 60
    intervals_per_negotiation: int = 4
    agents: list = field(default_factory=list)
    topology_params: TopologyParams = field(default_factory=TopologyParams)
    attack: AttackConfig = field(default_factory=AttackConfig)
    observer_arch: str = "MultiLeveled"
    info_level: int = 4
    controller_arch: str = "Centralized"
    incident_interval: int = 20
    control_interval: int = 36
    delay_model: DelayModel = field(default_factory=DelayModel)

    def agent_ids(self):
        return [a.agent_id for a in self.agents]


def validate_scenario(config: ScenarioConfig) -> list:
    """Check every model invariant; returns a list of violations (empty = ok).

    Each violation is a string prefixed with the path of the offending field.
    Violations are data, not faults: this never raises.
    """
    v = []
    if config.num_intervals < 1:
        v.append("num_intervals: must be >= 1")
    if config.intervals_per_negotiation < 1:
        v.append("intervals_per_negotiation: must be >= 1")
    if not (0 < config.incident_interval < config.control_interval < config.num_intervals):
        if config.control_interval <= config.incident_interval:
            v.append("control_interval: control before incident")
        else:
            v.append("incident_interval/control_interval: must satisfy "
                     "0 < incident < control < num_intervals")
    if config.observer_arch not in OBSERVER_ARCHS:
        v.append(f"observer_arch: unknown value {config.observer_arch!r}")
    if config.controller_arch not in CONTROLLER_ARCHS:
        v.append(f"controller_arch: unknown value {config.controller_arch!r}")
    if config.info_level not in (1, 2, 3, 4):
        v.append(f"info_level: must be in 1..4, got {config.info_level}")
    if config.delay_model.min_ticks < 0 or config.delay_model.max_ticks < config.delay_model.min_ticks:
        v.append("delay_model: need 0 <= min_ticks <= max_ticks")
    tp = config.topology_params
    n = len(config.agents)
    if tp.k % 2 != 0 or tp.k < 2 or (n and tp.k >= n):
        v.append(f"topology_params.k: must be even and 2 <= k < n, got k={tp.k}, n={n}")
    if not (0.0 <= tp.rewire_probability <= 1.0):
        v.append("topology_params.rewire_probability: must be in [0,1]")

    at = config.attack
    if at.mode not in ATTACK_MODES:
        v.append(f"attack.mode: unknown value {at.mode!r}")
    if at.mode == "Scale" and 0.99 <= at.scale_factor <= 1.01:
        v.append("attack.scale_factor: Scale within [0.99, 1.01] is a no-op attack")
    if at.mode == "Replace" and at.replacement is None:
        v.append("attack.replacement: Replace mode requires a replacement schedule")

    seen_agent, seen_unit = set(), set()
    n_compromised = 0
    for i, a in enumerate(config.agents):
        path = f"agents[{i}]"
        if a.agent_id in seen_agent:
            v.append(f"{path}.agent_id: duplicate id {a.agent_id!r}")
        seen_agent.add(a.agent_id)
        u = a.unit
        if u.unit_id in seen_unit:
            v.append(f"{path}.unit.unit_id: duplicate id {u.unit_id!r}")
        seen_unit.add(u.unit_id)
        if u.unit_type not in UNIT_TYPES:
            v.append(f"{path}.unit.unit_type: unknown type {u.unit_type!r}")
        if not u.feasible_schedules:
            v.append(f"{path}.unit.feasible_schedules: feasible_schedules empty")
        for j, s in enumerate(u.feasible_schedules):
            if len(s) != config.intervals_per_negotiation:
                v.append(f"{path}.unit.feasible_schedules[{j}]: length {len(s)} != "
                         f"intervals_per_negotiation {config.intervals_per_negotiation}")
                break
            if any(x != x or x in (float("inf"), float("-inf")) for x in s):
                v.append(f"{path}.unit.feasible_schedules[{j}]: non-finite value")
                break
        if a.is_compromised:
            n_compromised += 1
    return v


def _unit_schedules(rng: random.Random, unit_type: str, slots: int, n_candidates: int = 10,
                    battery_rank: int = 0) -> list:
    """Seeded candidate set for one unit; all values on the setpoint grid.

    Wind/PV/Household: a per-unit base level with per-candidate flexibility
    steps, so reported values cluster (anomaly detection gets a stable
    signature). Battery: a ladder of charge/discharge levels; batteries
    alternate between a bulk unit (wide range, coarse rungs) and a trim unit
    (narrow range, one rung per grid step), so together they can absorb a
    large offset and still land exactly on the target.
    """
    if unit_type == "Battery":
        if battery_rank % 2 == 0:  # bulk: wide range, coarse rungs
            levels = [round(-7.0 + 1.75 * j, 6) for j in range(9)]
        else:  # trim: narrow range, one rung per grid step
            levels = [round(-1.5 + SETPOINT_GRID * j, 6) for j in range(13)]
        return [tuple(level for _ in range(slots)) for level in levels]
    if unit_type == "Wind":
        base = -rng.uniform(1.2, 2.4)
    elif unit_type == "PV":
        base = -rng.uniform(1.0, 2.0)
    else:  # Household; sized so production and consumption roughly balance
        base = rng.uniform(2.0, 3.2)
    base = quantize(base)
    schedules = [tuple(base for _ in range(slots))]
    for _ in range(n_candidates - 1):
        level = base + rng.choice((-0.5, -0.25, 0.25, 0.5))
        schedules.append(tuple(round(level, 6) for _ in range(slots)))
    return schedules


def generate_default_scenario(seed: int, n_agents: int = 8) -> ScenarioConfig:
    """Deterministic default neighborhood-grid scenario.

    Unit types rotate round-robin; one compromised agent is picked by a seeded
    draw among the non-storage units (scaling a storage unit's near-symmetric
    values gives no usable detection signature, so storage is not a default
    attack target; set AgentSpec.is_compromised by hand to override).
    """
    if n_agents < 4:
        raise ValueError(f"n_agents must be >= 4, got {n_agents}")
    rng = random.Random(f"ocsim-scenario:{seed}")
    slots = 4
    agents = []
    n_batteries = 0
    for i in range(n_agents):
        unit_type = UNIT_TYPES[i % len(UNIT_TYPES)]
        schedules = _unit_schedules(rng, unit_type, slots, battery_rank=n_batteries)
        if unit_type == "Battery":
            n_batteries += 1
        unit = UnitModel(unit_id=f"u{i:02d}", unit_type=unit_type,
                         feasible_schedules=schedules)
        agents.append(AgentSpec(agent_id=f"a{i:02d}", unit=unit))
    candidates = [a for a in agents if a.unit.unit_type != "Battery"]
    rng.choice(candidates).is_compromised = True
    return ScenarioConfig(seed=seed, agents=agents)


# --- scenario file round-trip (JSON: key/value + nested lists) ---

def scenario_to_dict(config: ScenarioConfig) -> dict:
    d = asdict(config)
    for a in d["agents"]:
        a["unit"]["feasible_schedules"] = [list(s) for s in a["unit"]["feasible_schedules"]]
    return d


def scenario_from_dict(d: dict) -> ScenarioConfig:
    agents = [AgentSpec(agent_id=a["agent_id"],
                        unit=UnitModel(unit_id=a["unit"]["unit_id"],
                                       unit_type=a["unit"]["unit_type"],
                                       feasible_schedules=[tuple(s) for s in a["unit"]["feasible_schedules"]]),
                        is_compromised=a["is_compromised"])
              for a in d["agents"]]
    repl = d["attack"].get("replacement")
    return ScenarioConfig(
        seed=d["seed"],
        num_intervals=d["num_intervals"],
        intervals_per_negotiation=d["intervals_per_negotiation"],
        agents=agents,
        topology_params=TopologyParams(**d["topology_params"]),
        attack=AttackConfig(mode=d["attack"]["mode"],
                            scale_factor=d["attack"]["scale_factor"],
                            offset_kw=d["attack"]["offset_kw"],
                            replacement=tuple(repl) if repl is not None else None,
                            active_from_interval=d["attack"]["active_from_interval"]),
        observer_arch=d["observer_arch"],
        info_level=d["info_level"],
        controller_arch=d["controller_arch"],
        incident_interval=d["incident_interval"],
        control_interval=d["control_interval"],
        delay_model=DelayModel(**d["delay_model"]),
    )


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(scenario_to_dict(config), f, indent=2, sort_keys=True)
        f.write("\n")


def load_scenario(path) -> ScenarioConfig:
    with open(path) as f:
        return scenario_from_dict(json.load(f))
