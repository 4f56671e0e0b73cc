/**
 * Search view: query box, hit list with classification chips, facet sidebar.
 * Clicking a chip or a facet entry re-queries with that facet conjoined.
 */

import type { LakeApi } from "../api.js";
import { searchState, withFacet, type SearchState } from "../state.js";
import { el, errorBanner } from "./dom.js";

export interface SearchViewHooks {
  onOpenEntity: (entityId: string) => void;
}

export class SearchView {
  state: SearchState = { query: "", hits: [], total: 0, cursor: null };

  constructor(
    private api: LakeApi,
    private container: HTMLElement,
    private hooks: SearchViewHooks,
  ) {}

  async run(query: string, cursor?: string): Promise<void> {
    if (!query.trim()) {
      this.state = { query: "", hits: [], total: 0, cursor: null };
      this.render();
      return;
    }
    try {
      const page = await this.api.search(query, cursor);
      this.state = cursor
        ? { ...searchState(query, page), hits: [...this.state.hits, ...page.hits] }
        : searchState(query, page);
    } catch (err) {
      errorBanner(this.container, err);
      return;
    }
    this.render();
  }

  async addFacet(facet: string, value: string): Promise<void> {
    await this.run(withFacet(this.state.query, facet, value));
  }

  render(): void {
    this.container.replaceChildren();
    const box = el("div", { class: "search-bar" });
    const input = el("input", {
      class: "search-input",
      value: this.state.query,
      placeholder: "classification:enriched AND fileSize >= 1000",
    }) as HTMLInputElement;
    const button = el("button", { text: "Search" });
    button.addEventListener("click", () => void this.run(input.value));
    input.addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter") void this.run(input.value);
    });
    box.append(input, button);
    this.container.append(box);

    if (!this.state.query) {
      this.container.append(
        el("p", { class: "placeholder", text: "Type a query to explore the catalog." }),
      );
      return;
    }

    const list = el("div", { class: "hits" });
    for (const hit of this.state.hits) {
      const row = el("div", { class: "hit", "data-entity": hit.entity_id });
      const title = el("a", { class: "hit-name", text: hit.qualified_name, href: "#" });
      title.addEventListener("click", (event) => {
        event.preventDefault();
        this.hooks.onOpenEntity(hit.entity_id);
      });
      row.append(title, el("span", { class: "hit-type", text: hit.type_name }));
      const chips = el("span", { class: "chips" });
      void this.api.getEntity(hit.entity_id).then((card) => {
        for (const name of card.classifications) {
          const chip = el("button", { class: "chip", text: name });
          chip.addEventListener("click", () => void this.addFacet("classification", name));
          chips.append(chip);
        }
      }).catch(() => undefined /* chips are cosmetic; the hit row stands alone */);
      row.append(chips);
      list.append(row);
    }
    this.container.append(list, el("p", { class: "total", text: `total: ${this.state.total}` }));
    if (this.state.cursor) {
      const more = el("button", { text: "More", class: "more" });
      more.addEventListener("click", () => void this.run(this.state.query, this.state.cursor!));
      this.container.append(more);
    }
  }
}
