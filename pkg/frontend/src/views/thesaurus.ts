/**
 * Thesaurus tree navigation: expandable categories, terms with entity
 * counts, click-through to the entities a term indexes, and term-entity
 * association for the entity currently open in the card.
 */

import type { LakeApi } from "../api.js";
import { treeModel, type TreeModel, type TreeModelNode } from "../state.js";
import { el, errorBanner } from "./dom.js";

export interface ThesaurusViewHooks {
  onTermEntities: (termId: string, label: string) => void;
  /** Returns the entity the curator has open, or null. */
  currentEntity: () => string | null;
  onAssociate: (termId: string, label: string, thesaurusId: string) => Promise<void>;
}

export class ThesaurusView {
  model: TreeModel | null = null;

  constructor(
    private api: LakeApi,
    private container: HTMLElement,
    private hooks: ThesaurusViewHooks,
  ) {}

  async open(thesaurusId: string): Promise<void> {
    try {
      this.model = treeModel(await this.api.thesaurusTree(thesaurusId));
    } catch (err) {
      errorBanner(this.container, err);
      return;
    }
    this.render();
  }

  private async termId(label: string): Promise<string | null> {
    const terms = await this.api.findTerms(label);
    const here = terms.filter((t) => t.thesaurus_id === this.model?.thesaurusId);
    return here[0]?.term_id ?? terms[0]?.term_id ?? null;
  }

  render(): void {
    this.container.replaceChildren();
    const m = this.model;
    if (!m) return;
    this.container.append(el("h2", { text: `${m.title} (${m.thesaurusId})` }));
    const renderNode = (node: TreeModelNode): HTMLElement => {
      if (node.kind === "term") {
        const row = el("span", { class: "term-row" });
        const link = el("a", { class: "term", text: node.label, href: "#" });
        link.addEventListener("click", (event) => {
          event.preventDefault();
          void this.termId(node.label).then((id) => {
            if (id) this.hooks.onTermEntities(id, node.label);
          });
        });
        const count = el("span", { class: "term-count", "data-term": node.label });
        void this.termId(node.label)
          .then((id) => (id ? this.api.termEntities(id, false) : []))
          .then((hits) => {
            count.textContent = ` (${hits.length})`;
          })
          .catch(() => undefined);
        row.append(link, count);
        if (this.hooks.currentEntity()) {
          const attach = el("button", { class: "associate", text: "+", title: "associate with open entity" });
          attach.addEventListener("click", () => {
            void this.termId(node.label).then(async (id) => {
              if (id) {
                await this.hooks.onAssociate(id, node.label, m.thesaurusId);
                this.render(); // refresh the counts
              }
            });
          });
          row.append(attach);
        }
        return el("li", { class: "tree-term" }, row);
      }
      const details = el("details", { open: "" });
      details.append(el("summary", { text: node.label }));
      const children = el("ul", { class: "tree-children" });
      for (const child of node.children) children.append(renderNode(child));
      details.append(children);
      return el("li", { class: "tree-category" }, details);
    };
    const roots = el("ul", { class: "tree-roots" });
    for (const root of m.roots) roots.append(renderNode(root));
    this.container.append(roots);
  }
}
