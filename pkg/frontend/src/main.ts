/**
 * Catalog browser wiring: dev login box (sets the principal header), search
 * pane, entity card, thesaurus tree and lineage view on one page.
 */

import { LakeApi } from "./api.js";
import { el, errorBanner } from "./views/dom.js";
import { EntityView } from "./views/entity.js";
import { LineageView } from "./views/lineage.js";
import { SearchView } from "./views/search.js";
import { ThesaurusView } from "./views/thesaurus.js";

export interface App {
  api: LakeApi;
  search: SearchView;
  entity: EntityView;
  thesaurus: ThesaurusView;
  lineage: LineageView;
}

export function mountApp(root: HTMLElement, baseUrl: string, principal = "admin"): App {
  const api = new LakeApi(baseUrl, principal);

  const header = el("header", { class: "topbar" });
  const principalInput = el("input", {
    class: "principal",
    value: principal,
    title: "acting principal (dev login)",
  }) as HTMLInputElement;
  principalInput.addEventListener("change", () => {
    api.principal = principalInput.value.trim() || "admin";
  });
  header.append(el("strong", { text: "lakecat" }), el("label", { text: " principal: " }), principalInput);

  const searchPane = el("section", { class: "pane search-pane" });
  const entityPane = el("section", { class: "pane entity-pane" });
  const thesaurusPane = el("section", { class: "pane thesaurus-pane" });
  const lineagePane = el("section", { class: "pane lineage-pane" });
  root.replaceChildren(header, searchPane, entityPane, thesaurusPane, lineagePane);

  const lineage = new LineageView(api, lineagePane, {
    onOpenEntity: (id) => void entity.open(id),
  });
  const entity = new EntityView(api, entityPane, {
    onOpenLineage: (id) => void lineage.open(id, "up"),
    onFacetSearch: (facet, value) => void search.addFacet(facet, value),
  });
  const search = new SearchView(api, searchPane, {
    onOpenEntity: (id) => void entity.open(id),
  });
  const thesaurus = new ThesaurusView(api, thesaurusPane, {
    onTermEntities: (termId) =>
      void api
        .termEntities(termId, true)
        .then((hits) => {
          if (hits.length) void entity.open(hits[0].entity_id);
        })
        .catch((err) => errorBanner(thesaurusPane, err)),
    currentEntity: () => entity.model?.entityId ?? null,
    onAssociate: (termId, label, thesaurusId) => entity.associate(termId, label, thesaurusId),
  });

  search.render();
  void api
    .listThesauri()
    .then((all) => {
      if (all.length) void thesaurus.open(all[0].thesaurus_id);
    })
    .catch(() => undefined /* no thesaurus yet: pane stays empty */);

  return { api, search, entity, thesaurus, lineage };
}

declare global {
  interface Window {
    lakecatApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = (document.body.dataset.server ?? "").replace(/\/$/, "");
  window.lakecatApp = mountApp(document.getElementById("app")!, base);
}
