"""NPC staff: roles, trait vectors and the state-dependent performance score.

The score of a member is the dot product of their traits with a need-weight
vector. Each weight is a non-negative mix of normalized city parameters, so
the best staff setup moves as the city changes, while a member who is better
in every trait can never score lower.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field


class Role(enum.Enum):
    DEPUTY_MAYOR = "deputy_mayor"
    PUBLIC_RELATIONS = "public_relations"
    HUMAN_RESOURCES = "human_resources"
    TECHNICAL = "technical"
    ENGINEER = "engineer"
    ADMINISTRATOR = "administrator"


COMMON_TRAITS = ("willingness_to_work", "teamwork", "concentration", "intuition", "motivation")
EXPERTISE = {
    Role.DEPUTY_MAYOR: "governance",
    Role.PUBLIC_RELATIONS: "communication",
    Role.HUMAN_RESOURCES: "recruiting",
    Role.TECHNICAL: "technical_skill",
    Role.ENGINEER: "engineering",
    Role.ADMINISTRATOR: "accounting",
}


def traits_for(role: Role) -> tuple[str, ...]:
    return COMMON_TRAITS + (EXPERTISE[role],)


@dataclass
class StaffMember:
    npc_id: str
    name: str
    role: Role
    traits: dict[str, float]
    salary: int  # cents per tick
    employed_by: int | None = None

    def __post_init__(self):
        for k, v in self.traits.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"trait {k}={v} outside [0, 1]")
        if self.salary <= 0:
            raise ValueError("salary must be positive")

    def quality(self) -> float:
        # traits never change after hiring, so the mean is computed once
        q = self.__dict__.get("_quality")
        if q is None:
            q = self.__dict__["_quality"] = sum(self.traits.values()) / len(self.traits)
        return q

    def to_state(self) -> dict:
        return {
            "npc_id": self.npc_id,
            "name": self.name,
            "role": self.role.value,
            "traits": dict(sorted(self.traits.items())),
            "salary": self.salary,
            "employed_by": self.employed_by,
        }

    @classmethod
    def from_state(cls, d: dict) -> "StaffMember":
        return cls(d["npc_id"], d["name"], Role(d["role"]), dict(d["traits"]), d["salary"], d["employed_by"])


_FIRST = ("Ada", "Bruno", "Carla", "Dario", "Elena", "Fabio", "Gina", "Luca", "Marta", "Nino", "Olga", "Piero", "Rita", "Sara", "Tito", "Vera")
_LAST = ("Rossi", "Bianchi", "Greco", "Russo", "Costa", "Fontana", "Moretti", "Conti", "Gallo", "Ricci")


def generate_npc(seq: int, seed: int = 0) -> StaffMember:
    """The ``seq``-th marketplace NPC for a world seeded with ``seed``."""
    rng = random.Random(f"npc:{seed}:{seq}")
    role = rng.choice(list(Role))
    traits = {t: round(rng.random(), 3) for t in traits_for(role)}
    mean = sum(traits.values()) / len(traits)
    # better employees cost more: 1..6 cents per tick
    salary = 1 + int(round(5 * mean))
    name = f"{rng.choice(_FIRST)} {rng.choice(_LAST)}"
    return StaffMember(f"n{seq:05d}", name, role, traits, salary)


# -- performance ------------------------------------------------------------------

MIN_PARAMETERS = 50


def _mix_weight(role: Role, trait: str, param: str) -> float:
    digest = hashlib.sha256(f"{role.value}|{trait}|{param}".encode()).digest()
    return int.from_bytes(digest[:4], "big") / 2**32


@dataclass
class _WeightCache:
    by_key: dict = field(default_factory=dict)

    def matrix(self, role: Role, params: tuple[str, ...]) -> dict[str, list[float]]:
        key = (role, params)
        if key not in self.by_key:
            self.by_key[key] = {t: [_mix_weight(role, t, p) for p in params] for t in traits_for(role)}
        return self.by_key[key]


_CACHE = _WeightCache()


def need_weights(role: Role, parameters: dict[str, float]) -> dict[str, float]:
    """Non-negative weight per trait, derived from normalized city parameters in [0, 1]."""
    if len(parameters) < MIN_PARAMETERS:
        raise ValueError(f"need at least {MIN_PARAMETERS} city parameters, got {len(parameters)}")
    names = tuple(sorted(parameters))
    values = [min(max(parameters[n], 0.0), 1.0) for n in names]
    out = {}
    for trait, row in _CACHE.matrix(role, names).items():
        total = sum(row)
        out[trait] = sum(w * v for w, v in zip(row, values)) / total
    return out


def member_score(member: StaffMember, parameters: dict[str, float]) -> float:
    weights = need_weights(member.role, parameters)
    return sum(member.traits.get(t, 0.0) * w for t, w in weights.items())
