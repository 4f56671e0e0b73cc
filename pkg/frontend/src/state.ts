/**
 * View models: pure projections of API responses.
 *
 * Nothing here mutates server state or invents data; views render these and
 * the curation handlers reconcile them with fresh API reads.
 */

import type { EntityCard, LineageWire, SearchPage, ThesaurusDoc, TreeNode } from "./api.js";

export interface SearchState {
  query: string;
  hits: SearchPage["hits"];
  total: number;
  cursor: string | null;
}

export function searchState(query: string, page: SearchPage): SearchState {
  return { query, hits: page.hits, total: page.total, cursor: page.cursor };
}

/** Append a conjunctive facet to a query string. */
export function withFacet(query: string, facet: string, value: string): string {
  const clause = `${facet}:${/[\s()"']/.test(value) ? JSON.stringify(value) : value}`;
  return query.trim() ? `(${query}) AND ${clause}` : clause;
}

export interface CardModel {
  entityId: string;
  qualifiedName: string;
  typeName: string;
  status: string;
  attributes: [string, string][];
  classifications: string[];
  terms: { termId: string; label: string; thesaurusId: string }[];
}

export function cardModel(card: EntityCard): CardModel {
  return {
    entityId: card.entity_id,
    qualifiedName: card.qualified_name,
    typeName: card.type_name,
    status: card.status,
    attributes: Object.entries(card.attributes).map(([k, v]) => [
      k,
      typeof v === "string" ? v : JSON.stringify(v),
    ]),
    classifications: [...card.classifications],
    terms: card.terms.map((t) => ({
      termId: t.term_id,
      label: t.label,
      thesaurusId: t.thesaurus_id,
    })),
  };
}

export interface TreeModel {
  thesaurusId: string;
  title: string;
  roots: TreeModelNode[];
}

export interface TreeModelNode {
  kind: "category" | "term";
  label: string;
  path: string[];
  children: TreeModelNode[];
}

export function treeModel(doc: ThesaurusDoc): TreeModel {
  const walk = (node: TreeNode, prefix: string[]): TreeModelNode => {
    if ("term" in node) {
      return { kind: "term", label: node.term, path: [...prefix, node.term], children: [] };
    }
    const path = [...prefix, node.label];
    return {
      kind: "category",
      label: node.label,
      path,
      children: node.children.map((c) => walk(c, path)),
    };
  };
  return {
    thesaurusId: doc.thesaurus_id,
    title: doc.title,
    roots: doc.categories.map((c) => walk(c, [])),
  };
}

// --- lineage layout -----------------------------------------------------------

export interface LaidOutNode {
  id: string;
  kind: "entity" | "process";
  name: string;
  layer: number;
  row: number;
  x: number;
  y: number;
}

export interface LineageLayout {
  nodes: LaidOutNode[];
  edges: { from: string; to: string }[];
  width: number;
  height: number;
}

export const LAYER_GAP = 180;
export const ROW_GAP = 70;

/**
 * Layered left-to-right layout: a node's layer is the longest path from any
 * source, so inputs always sit left of what they feed.
 */
export function lineageLayout(wire: LineageWire): LineageLayout {
  const incoming = new Map<string, string[]>();
  const outgoing = new Map<string, string[]>();
  for (const node of wire.nodes) {
    incoming.set(node.id, []);
    outgoing.set(node.id, []);
  }
  for (const edge of wire.edges) {
    incoming.get(edge.to)?.push(edge.from);
    outgoing.get(edge.from)?.push(edge.to);
  }
  const layer = new Map<string, number>();
  const resolve = (id: string, seen: Set<string>): number => {
    const known = layer.get(id);
    if (known !== undefined) return known;
    if (seen.has(id)) return 0; // defensive: the server guarantees a DAG
    seen.add(id);
    const parents = incoming.get(id) ?? [];
    const value = parents.length
      ? 1 + Math.max(...parents.map((p) => resolve(p, seen)))
      : 0;
    layer.set(id, value);
    return value;
  };
  for (const node of wire.nodes) resolve(node.id, new Set());
  const byLayer = new Map<number, typeof wire.nodes>();
  for (const node of wire.nodes) {
    const l = layer.get(node.id) ?? 0;
    const bucket = byLayer.get(l) ?? [];
    bucket.push(node);
    byLayer.set(l, bucket);
  }
  const nodes: LaidOutNode[] = [];
  let maxRow = 0;
  for (const [l, bucket] of [...byLayer.entries()].sort((a, b) => a[0] - b[0])) {
    bucket.sort((a, b) => a.name.localeCompare(b.name));
    bucket.forEach((node, row) => {
      nodes.push({
        ...node,
        layer: l,
        row,
        x: 60 + l * LAYER_GAP,
        y: 50 + row * ROW_GAP,
      });
      maxRow = Math.max(maxRow, row);
    });
  }
  const maxLayer = Math.max(0, ...[...byLayer.keys()]);
  return {
    nodes,
    edges: wire.edges,
    width: 120 + (maxLayer + 1) * LAYER_GAP,
    height: 100 + (maxRow + 1) * ROW_GAP,
  };
}
