"""Provenance capture and traversal.

The lineage graph is bipartite and append-only: entities feed processes
(consumption edges) and processes produce entities (production edges).
Deleting an entity tombstones it but never removes lineage, so provenance
survives the data it describes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

PROCESS_KINDS = ("ingestion", "distillation", "transformation", "custom")


@dataclass(frozen=True)
class ProcessNode:
    process_id: str
    name: str
    kind: str
    inputs: frozenset[str]
    outputs: frozenset[str]
    executed_by: str
    executed_at: str
    parameters: dict

    def to_dict(self) -> dict:
        return {
            "process_id": self.process_id,
            "name": self.name,
            "kind": self.kind,
            "inputs": sorted(self.inputs),
            "outputs": sorted(self.outputs),
            "executed_by": self.executed_by,
            "executed_at": self.executed_at,
            "parameters": dict(self.parameters),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> ProcessNode:
        return cls(
            process_id=raw["process_id"],
            name=raw["name"],
            kind=raw["kind"],
            inputs=frozenset(raw["inputs"]),
            outputs=frozenset(raw["outputs"]),
            executed_by=raw["executed_by"],
            executed_at=raw["executed_at"],
            parameters=dict(raw.get("parameters", {})),
        )


@dataclass(frozen=True)
class SubgraphNode:
    node_id: str
    kind: str  # "entity" | "process"
    name: str
    status: str = "active"


@dataclass(frozen=True)
class LineageSubgraph:
    """Traversal result; always contains the seed entity node."""

    seed: str
    nodes: tuple[SubgraphNode, ...]
    edges: tuple[tuple[str, str], ...]

    def node_ids(self) -> set[str]:
        return {n.node_id for n in self.nodes}

    def entity_ids(self) -> set[str]:
        return {n.node_id for n in self.nodes if n.kind == "entity"}

    def process_ids(self) -> set[str]:
        return {n.node_id for n in self.nodes if n.kind == "process"}

    def to_wire(self) -> dict:
        return {
            "nodes": [
                {"id": n.node_id, "kind": n.kind, "name": n.name}
                for n in sorted(self.nodes, key=lambda n: n.node_id)
            ],
            "edges": [{"from": a, "to": b} for a, b in sorted(self.edges)],
        }


def would_cycle(
    inputs: frozenset[str],
    outputs: frozenset[str],
    producers: dict[str, set[str]],
    processes: dict[str, ProcessNode],
) -> bool:
    """True when adding a process with these inputs/outputs would close a cycle.

    The new edges run input -> P -> output, so a cycle needs an existing path
    output ->* input, i.e. some output among the ancestors of some input.
    Walks backwards from the inputs through producing processes.
    """
    targets = set(outputs)
    seen: set[str] = set()
    frontier = deque(inputs)
    while frontier:
        entity = frontier.popleft()
        if entity in targets:
            return True
        if entity in seen:
            continue
        seen.add(entity)
        for process_id in producers.get(entity, ()):
            frontier.extend(processes[process_id].inputs)
    return False


def _walk(
    entity_id: str,
    max_hops: int | None,
    step_processes,
    step_entities,
    edge_of_entity,
    edge_of_process,
) -> tuple[set[str], set[str], set[tuple[str, str]]]:
    entities = {entity_id}
    processes: set[str] = set()
    edges: set[tuple[str, str]] = set()
    frontier = {entity_id}
    hops = 0
    while frontier and (max_hops is None or hops < max_hops):
        next_frontier: set[str] = set()
        for entity in frontier:
            for process_id in step_processes(entity):
                processes.add(process_id)
                edges.add(edge_of_entity(entity, process_id))
                for other in step_entities(process_id):
                    edges.add(edge_of_process(process_id, other))
                    if other not in entities:
                        entities.add(other)
                        next_frontier.add(other)
        frontier = next_frontier
        hops += 1
    return entities, processes, edges


def upstream_ids(
    entity_id: str,
    max_hops: int | None,
    producers: dict[str, set[str]],
    processes: dict[str, ProcessNode],
) -> tuple[set[str], set[str], set[tuple[str, str]]]:
    """Entities/processes reachable backwards within max_hops process-steps."""
    return _walk(
        entity_id,
        max_hops,
        lambda e: producers.get(e, ()),
        lambda p: processes[p].inputs,
        lambda e, p: (p, e),  # production edge: process -> produced entity
        lambda p, other: (other, p),  # consumption edge: input entity -> process
    )


def downstream_ids(
    entity_id: str,
    max_hops: int | None,
    consumers: dict[str, set[str]],
    processes: dict[str, ProcessNode],
) -> tuple[set[str], set[str], set[tuple[str, str]]]:
    return _walk(
        entity_id,
        max_hops,
        lambda e: consumers.get(e, ()),
        lambda p: processes[p].outputs,
        lambda e, p: (e, p),
        lambda p, other: (p, other),
    )
