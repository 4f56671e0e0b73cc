/**
 * Entity card: attribute table plus classification and term chips with
 * curation actions. Updates render optimistically and reconcile against the
 * server; a denial rolls the card back and shows the deny reason.
 */

import { ApiError, type LakeApi } from "../api.js";
import { cardModel, type CardModel } from "../state.js";
import { el, errorBanner } from "./dom.js";

export interface EntityViewHooks {
  onOpenLineage: (entityId: string) => void;
  onFacetSearch: (facet: string, value: string) => void;
}

export class EntityView {
  model: CardModel | null = null;

  constructor(
    private api: LakeApi,
    private container: HTMLElement,
    private hooks: EntityViewHooks,
  ) {}

  async open(entityId: string): Promise<void> {
    try {
      this.model = cardModel(await this.api.getEntity(entityId));
    } catch (err) {
      errorBanner(this.container, err);
      return;
    }
    this.render();
  }

  private async reconcile(): Promise<void> {
    if (this.model) {
      this.model = cardModel(await this.api.getEntity(this.model.entityId));
      this.render();
    }
  }

  /** Optimistic mutation wrapper: apply locally, call the server, roll back on deny. */
  private async curate(
    optimistic: (m: CardModel) => void,
    call: () => Promise<unknown>,
  ): Promise<void> {
    if (!this.model) return;
    const before: CardModel = JSON.parse(JSON.stringify(this.model));
    optimistic(this.model);
    this.render();
    try {
      await call();
      await this.reconcile(); // server state is authoritative
    } catch (err) {
      this.model = before;
      this.render();
      if (err instanceof ApiError && err.code === "access-denied") {
        errorBanner(this.container, new Error(`denied: ${err.message}`));
      } else {
        errorBanner(this.container, err);
      }
    }
  }

  tag(name: string): Promise<void> {
    return this.curate(
      (m) => {
        if (!m.classifications.includes(name)) m.classifications.push(name);
      },
      () => this.api.tag(this.model!.entityId, name),
    );
  }

  untag(name: string): Promise<void> {
    return this.curate(
      (m) => {
        m.classifications = m.classifications.filter((c) => c !== name);
      },
      () => this.api.untag(this.model!.entityId, name),
    );
  }

  associate(termId: string, label: string, thesaurusId: string): Promise<void> {
    return this.curate(
      (m) => {
        if (!m.terms.some((t) => t.termId === termId)) {
          m.terms.push({ termId, label, thesaurusId });
        }
      },
      () => this.api.associate(this.model!.entityId, termId),
    );
  }

  render(): void {
    this.container.replaceChildren();
    const m = this.model;
    if (!m) return;
    const card = el("div", { class: "entity-card", "data-entity": m.entityId });
    card.append(
      el("h2", { text: m.qualifiedName }),
      el("p", { class: "meta", text: `${m.typeName} · ${m.status}` }),
    );
    const lineageButton = el("button", { class: "lineage-button", text: "Lineage" });
    lineageButton.addEventListener("click", () => this.hooks.onOpenLineage(m.entityId));
    card.append(lineageButton);

    const table = el("table", { class: "attributes" });
    for (const [key, value] of m.attributes) {
      table.append(el("tr", {}, el("th", { text: key }), el("td", { text: value })));
    }
    card.append(table);

    const classifications = el("div", { class: "chips classifications" });
    for (const name of m.classifications) {
      const chip = el("span", { class: "chip", text: name });
      const search = el("button", { class: "chip-search", text: "find", title: `search ${name}` });
      search.addEventListener("click", () => this.hooks.onFacetSearch("classification", name));
      const remove = el("button", { class: "chip-remove", text: "×", title: `untag ${name}` });
      remove.addEventListener("click", () => void this.untag(name));
      chip.append(search, remove);
      classifications.append(chip);
    }
    const tagInput = el("input", { class: "tag-input", placeholder: "tag with…" }) as HTMLInputElement;
    tagInput.addEventListener("keydown", (event) => {
      if ((event as KeyboardEvent).key === "Enter" && tagInput.value.trim()) {
        void this.tag(tagInput.value.trim());
      }
    });
    classifications.append(tagInput);
    card.append(el("h3", { text: "Classifications" }), classifications);

    const terms = el("div", { class: "chips terms" });
    for (const term of m.terms) {
      const chip = el("span", { class: "chip term-chip", text: term.label });
      const search = el("button", { class: "chip-search", text: "find" });
      search.addEventListener("click", () => this.hooks.onFacetSearch("term", term.label));
      chip.append(search);
      terms.append(chip);
    }
    card.append(el("h3", { text: "Terms" }), terms);
    this.container.append(card);
  }
}
