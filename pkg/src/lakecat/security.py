"""Deny-by-default RBAC with the two-stage check.

Stage 1 gates the API action itself; stage 2 gates every entity the action
touches. Policies attach to roles; principals reach roles directly or through
group membership. Evaluation order: any matching deny wins, then any matching
allow, else deny.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

ACTIONS = ("read", "create", "update", "delete", "tag", "associate", "admin")
RESOURCE_KINDS = ("entity", "classification", "thesaurus", "type", "api-action")

DEFAULT_DENY = "default-deny"


@dataclass(frozen=True)
class Principal:
    name: str
    groups: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {"name": self.name, "groups": sorted(self.groups)}


@dataclass(frozen=True)
class Role:
    name: str
    members: frozenset[str]  # principal or group names

    def to_dict(self) -> dict:
        return {"name": self.name, "members": sorted(self.members)}


@dataclass(frozen=True)
class Policy:
    policy_id: str
    role: str
    resource_kind: str
    pattern: str
    actions: frozenset[str]
    effect: str  # "allow" | "deny"

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "role": self.role,
            "resource": {"kind": self.resource_kind, "pattern": self.pattern},
            "actions": sorted(self.actions),
            "effect": self.effect,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> Policy:
        return cls(
            policy_id=raw["policy_id"],
            role=raw["role"],
            resource_kind=raw["resource"]["kind"],
            pattern=raw["resource"]["pattern"],
            actions=frozenset(raw["actions"]),
            effect=raw["effect"],
        )


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str
    stage: int | None = None
    resource: str | None = None

    def to_dict(self) -> dict:
        return {
            "allowed": self.allowed,
            "reason": self.reason,
            "stage": self.stage,
            "resource": self.resource,
        }


@lru_cache(maxsize=4096)
def compile_glob(pattern: str) -> re.Pattern:
    """Compile a resource glob: ``*`` stays within a /-segment, ``**`` crosses."""
    out = []
    i = 0
    while i < len(pattern):
        if pattern.startswith("**", i):
            out.append(".*")
            i += 2
        elif pattern[i] == "*":
            out.append("[^/]*")
            i += 1
        else:
            out.append(re.escape(pattern[i]))
            i += 1
    return re.compile("".join(out) + r"\Z")


def roles_of(principal: Principal, roles: Iterable[Role]) -> set[str]:
    keys = {principal.name} | set(principal.groups)
    return {role.name for role in roles if role.members & keys}


def check(
    principals: dict[str, Principal],
    roles: dict[str, Role],
    policies: Iterable[Policy],
    principal_name: str,
    action: str,
    resource_kind: str,
    resource_id: str,
) -> Decision:
    """Single-stage policy evaluation; total, deterministic, deny-by-default."""
    principal = principals.get(principal_name)
    if principal is None:
        return Decision(False, DEFAULT_DENY)
    member_of = roles_of(principal, roles.values())
    allow_hit: Policy | None = None
    for policy in policies:
        if policy.role not in member_of:
            continue
        if policy.resource_kind != resource_kind or action not in policy.actions:
            continue
        if not compile_glob(policy.pattern).match(resource_id):
            continue
        if policy.effect == "deny":
            return Decision(False, policy.policy_id)
        if allow_hit is None:
            allow_hit = policy
    if allow_hit is not None:
        return Decision(True, allow_hit.policy_id)
    return Decision(False, DEFAULT_DENY)


def make_check_filter(
    principals: dict[str, Principal],
    roles: dict[str, Role],
    policies: Iterable[Policy],
    principal_name: str,
    action: str,
    resource_kind: str,
):
    """Precompiled equivalent of check() for one (principal, action, kind).

    Returns a predicate over resource ids; used to filter large result sets
    without re-deriving role membership per entity.
    """
    principal = principals.get(principal_name)
    if principal is None:
        return lambda resource_id: False
    member_of = roles_of(principal, roles.values())
    denies = []
    allows = []
    for policy in policies:
        if (
            policy.role in member_of
            and policy.resource_kind == resource_kind
            and action in policy.actions
        ):
            (denies if policy.effect == "deny" else allows).append(
                compile_glob(policy.pattern)
            )

    def allowed(resource_id: str) -> bool:
        for pattern in denies:
            if pattern.match(resource_id):
                return False
        for pattern in allows:
            if pattern.match(resource_id):
                return True
        return False

    return allowed


def two_stage_check(
    principals: dict[str, Principal],
    roles: dict[str, Role],
    policies: Iterable[Policy],
    principal_name: str,
    action_id: str,
    action: str,
    touched_entities: Iterable[str] = (),
) -> Decision:
    """Service-level action check, then a data-level check per touched entity.

    Stage-1 denial short-circuits; the first stage-2 failure reports the
    entity that caused it.
    """
    policies = list(policies)
    stage1 = check(principals, roles, policies, principal_name, action, "api-action", action_id)
    if not stage1.allowed:
        return Decision(False, stage1.reason, stage=1, resource=action_id)
    for qualified_name in touched_entities:
        verdict = check(
            principals, roles, policies, principal_name, action, "entity", qualified_name
        )
        if not verdict.allowed:
            return Decision(False, verdict.reason, stage=2, resource=qualified_name)
    return Decision(True, stage1.reason)
