"""False-data-injection fault model.

From the configured incident interval on, power values that belong to the
compromised sender's own entry in outgoing negotiation payloads are falsified
on the wire. The agent's internal state is never touched: only the wire view
lies, so the manipulation is invisible at information levels that cannot see
message content.
"""
from __future__ import annotations

import copy

from .model import AttackConfig


class InvalidAttackConfig(ValueError):
    pass


def _transform(values, config: AttackConfig):
    if config.mode == "Scale":
        return [v * config.scale_factor for v in values]
    if config.mode == "Offset":
        return [v + config.offset_kw for v in values]
    if config.mode == "Replace":
        if config.replacement is None:
            raise InvalidAttackConfig("Replace mode requires a replacement schedule")
        return list(config.replacement)
    raise InvalidAttackConfig(f"unknown attack mode {config.mode!r}")


def tamper(message, config: AttackConfig, current_interval: int):
    """Return the wire view of a compromised agent's message.

    Metadata (ids, ticks, endpoints) is never altered; before the activation
    interval the message passes through unchanged.
    """
    if current_interval < config.active_from_interval:
        return message
    if message.kind != "WorkingMemoryUpdate":
        return message
    msg = copy.deepcopy(message)
    sender = msg.sender
    entries = msg.content.get("entries", {})
    if sender in entries:
        entries[sender]["values"] = _transform(entries[sender]["values"], config)
    best = msg.content.get("best")
    if best is not None and sender in best.get("assignment", {}):
        best["assignment"][sender] = _transform(best["assignment"][sender], config)
    return msg
