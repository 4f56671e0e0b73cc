/**
 * Typed client for the catalog gateway.
 *
 * Every call goes through the documented /api/v1 routes; the acting
 * principal rides in the X-Lake-Principal header (dev login box sets it).
 */

export interface EntitySummary {
  entity_id: string;
  qualified_name: string;
  type_name: string;
  name?: string;
}

export interface SearchPage {
  hits: EntitySummary[];
  total: number;
  cursor: string | null;
}

export interface TermChip {
  term_id: string;
  label: string;
  thesaurus_id: string;
}

export interface EntityCard {
  entity_id: string;
  type_name: string;
  type_version: number;
  qualified_name: string;
  created_by: string;
  created_at: string;
  attributes: Record<string, unknown>;
  status: string;
  classifications: string[];
  terms: TermChip[];
  links: unknown[];
}

export interface LineageWire {
  nodes: { id: string; kind: "entity" | "process"; name: string }[];
  edges: { from: string; to: string }[];
}

export interface ThesaurusSummary {
  thesaurus_id: string;
  title: string;
  language: string;
}

/** Interchange tree node: a category has label+children, a term only a label. */
export type TreeNode = { label: string; children: TreeNode[] } | { term: string };

export interface ThesaurusDoc extends ThesaurusSummary {
  categories: TreeNode[];
  relations: unknown[];
}

export interface TermInfo {
  term_id: string;
  thesaurus_id: string;
  label: string;
  parent: string;
}

export interface Classification {
  name: string;
  description: string;
  parent: string | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class LakeApi {
  constructor(
    public baseUrl: string,
    public principal: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: {
        "X-Lake-Principal": this.principal,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const payload = (await response.json().catch(() => ({}))) as {
      ok?: boolean;
      data?: T;
      error?: { code: string; message: string };
    };
    if (!response.ok || payload.error) {
      const err = payload.error ?? { code: "unknown", message: response.statusText };
      throw new ApiError(response.status, err.code, err.message);
    }
    return payload.data as T;
  }

  search(q: string, cursor?: string, pageSize = 50): Promise<SearchPage> {
    const params = new URLSearchParams({ q, page_size: String(pageSize) });
    if (cursor) params.set("cursor", cursor);
    return this.request("GET", `/api/v1/search?${params}`);
  }

  getEntity(entityId: string): Promise<EntityCard> {
    return this.request("GET", `/api/v1/entities/${encodeURIComponent(entityId)}`);
  }

  tag(entityId: string, classification: string): Promise<string[]> {
    return this.request(
      "POST",
      `/api/v1/entities/${encodeURIComponent(entityId)}/classifications/${encodeURIComponent(classification)}`,
    );
  }

  untag(entityId: string, classification: string): Promise<string[]> {
    return this.request(
      "DELETE",
      `/api/v1/entities/${encodeURIComponent(entityId)}/classifications/${encodeURIComponent(classification)}`,
    );
  }

  associate(entityId: string, termId: string): Promise<string[]> {
    return this.request(
      "POST",
      `/api/v1/entities/${encodeURIComponent(entityId)}/terms/${encodeURIComponent(termId)}`,
    );
  }

  listClassifications(): Promise<Classification[]> {
    return this.request("GET", "/api/v1/classifications");
  }

  listThesauri(): Promise<ThesaurusSummary[]> {
    return this.request("GET", "/api/v1/thesauri");
  }

  thesaurusTree(thesaurusId: string): Promise<ThesaurusDoc> {
    return this.request("GET", `/api/v1/thesauri/${encodeURIComponent(thesaurusId)}/tree`);
  }

  findTerms(label: string): Promise<TermInfo[]> {
    return this.request("GET", `/api/v1/terms?${new URLSearchParams({ label })}`);
  }

  termEntities(termId: string, expand: boolean): Promise<EntitySummary[]> {
    const params = new URLSearchParams({ expand: String(expand) });
    return this.request(
      "GET",
      `/api/v1/terms/${encodeURIComponent(termId)}/entities?${params}`,
    );
  }

  lineage(entityId: string, direction: "up" | "down", hops?: number): Promise<LineageWire> {
    const params = new URLSearchParams({ direction });
    if (hops !== undefined) params.set("hops", String(hops));
    return this.request(
      "GET",
      `/api/v1/lineage/${encodeURIComponent(entityId)}?${params}`,
    );
  }
}
