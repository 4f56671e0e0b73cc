import { afterEach, describe, expect, it, vi } from "vitest";

import { LakeApi, type EntityCard } from "../src/api.js";
import { EntityView } from "../src/views/entity.js";

function makeCard(overrides: Partial<EntityCard> = {}): EntityCard {
  return {
    entity_id: "e1",
    type_name: "table",
    type_version: 1,
    qualified_name: "lake://artefacts/objects_origin",
    created_by: "pliu",
    created_at: "2026-01-01T00:00:00+00:00",
    attributes: { name: "objects_origin", row_count: 5 },
    status: "active",
    classifications: ["enriched"],
    terms: [],
    links: [],
    ...overrides,
  };
}

function jsonResponse(data: unknown, status = 200): Response {
  return new Response(JSON.stringify(status < 400 ? { ok: true, data } : { error: data }), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

afterEach(() => {
  vi.unstubAllGlobals();
});

function mountView() {
  const container = document.createElement("div");
  document.body.append(container);
  const api = new LakeApi("http://stub", "curator");
  const view = new EntityView(api, container, {
    onOpenLineage: () => undefined,
    onFacetSearch: () => undefined,
  });
  return { container, view };
}

describe("EntityView", () => {
  it("renders only values that came from the API response", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(makeCard())));
    const { container, view } = mountView();
    await view.open("e1");
    expect(container.querySelector("h2")?.textContent).toBe("lake://artefacts/objects_origin");
    const cells = [...container.querySelectorAll(".attributes th")].map((n) => n.textContent);
    expect(cells.sort()).toEqual(["name", "row_count"]);
    expect(container.textContent).toContain("enriched");
  });

  it("applies a tag optimistically and reconciles with the server", async () => {
    const after = makeCard({ classifications: ["enriched", "2020"] });
    const fetchStub = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      const path = String(url);
      if (init?.method === "POST") return jsonResponse(["enriched", "2020"]);
      if (path.includes("/entities/e1")) {
        return jsonResponse(fetchStub.mock.calls.length > 1 ? after : makeCard());
      }
      throw new Error(`unexpected ${path}`);
    });
    vi.stubGlobal("fetch", fetchStub);
    const { container, view } = mountView();
    await view.open("e1");
    await view.tag("2020");
    expect(view.model?.classifications).toContain("2020");
    expect(container.textContent).toContain("2020");
  });

  it("rolls back and shows the deny reason when the server refuses", async () => {
    const calls: string[] = [];
    vi.stubGlobal(
      "fetch",
      vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
        calls.push(`${init?.method ?? "GET"} ${url}`);
        if (init?.method === "DELETE") {
          return jsonResponse(
            { code: "access-denied", message: "access denied (stage 2): policy-7 on lake://artefacts/objects_origin" },
            403,
          );
        }
        return jsonResponse(makeCard());
      }),
    );
    const { container, view } = mountView();
    await view.open("e1");
    await view.untag("enriched");
    // rolled back: the chip is still there, and the denial is surfaced
    expect(view.model?.classifications).toEqual(["enriched"]);
    expect(container.textContent).toContain("enriched");
    const banner = container.querySelector(".banner.error");
    expect(banner?.textContent).toContain("stage 2");
    expect(banner?.textContent).toContain("policy-7");
  });
});
