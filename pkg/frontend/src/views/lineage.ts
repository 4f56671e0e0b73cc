/**
 * Lineage view: the gateway's subgraph serialization rendered as a layered
 * left-to-right SVG DAG (inputs left), with pan/zoom, a hops slider and
 * click-through to entity cards.
 */

import type { LakeApi } from "../api.js";
import { lineageLayout, type LineageLayout } from "../state.js";
import { el, errorBanner, svgEl } from "./dom.js";

export interface LineageViewHooks {
  onOpenEntity: (entityId: string) => void;
}

const NODE_W = 140;
const NODE_H = 40;

export class LineageView {
  layout: LineageLayout | null = null;
  entityId: string | null = null;
  direction: "up" | "down" = "up";
  hops: number | undefined = undefined;
  private viewBox = { x: 0, y: 0, w: 800, h: 400 };

  constructor(
    private api: LakeApi,
    private container: HTMLElement,
    private hooks: LineageViewHooks,
  ) {}

  async open(entityId: string, direction: "up" | "down" = "up", hops?: number): Promise<void> {
    this.entityId = entityId;
    this.direction = direction;
    this.hops = hops;
    try {
      const wire = await this.api.lineage(entityId, direction, hops);
      this.layout = lineageLayout(wire);
    } catch (err) {
      errorBanner(this.container, err);
      return;
    }
    this.viewBox = {
      x: 0,
      y: 0,
      w: Math.max(this.layout.width, 400),
      h: Math.max(this.layout.height, 200),
    };
    this.render();
  }

  render(): void {
    this.container.replaceChildren();
    const layout = this.layout;
    if (!layout || !this.entityId) {
      this.container.append(el("p", { class: "placeholder", text: "No lineage to show." }));
      return;
    }
    const controls = el("div", { class: "lineage-controls" });
    const slider = el("input", {
      type: "range",
      min: "1",
      max: "8",
      value: String(this.hops ?? 8),
      class: "hops-slider",
    }) as HTMLInputElement;
    slider.addEventListener("change", () => {
      void this.open(this.entityId!, this.direction, Number(slider.value));
    });
    const flip = el("button", {
      text: this.direction === "up" ? "show downstream" : "show upstream",
    });
    flip.addEventListener("click", () => {
      void this.open(this.entityId!, this.direction === "up" ? "down" : "up", this.hops);
    });
    controls.append(el("label", { text: "hops " }), slider, flip);
    this.container.append(controls);

    if (layout.nodes.length <= 1 && layout.edges.length === 0) {
      this.container.append(
        el("p", { class: "placeholder", text: "This entity has no recorded lineage yet." }),
      );
    }

    const svg = svgEl("svg", {
      class: "lineage-svg",
      viewBox: `${this.viewBox.x} ${this.viewBox.y} ${this.viewBox.w} ${this.viewBox.h}`,
      width: "100%",
      height: "420",
    });
    const position = new Map(layout.nodes.map((n) => [n.id, n]));
    for (const edge of layout.edges) {
      const a = position.get(edge.from);
      const b = position.get(edge.to);
      if (!a || !b) continue;
      svg.append(
        svgEl("line", {
          class: "edge",
          x1: String(a.x + NODE_W / 2),
          y1: String(a.y),
          x2: String(b.x - NODE_W / 2),
          y2: String(b.y),
          stroke: "#7a7a7a",
          "marker-end": "url(#arrow)",
        }),
      );
    }
    const defs = svgEl("defs");
    const marker = svgEl("marker", {
      id: "arrow", viewBox: "0 0 8 8", refX: "7", refY: "4",
      markerWidth: "7", markerHeight: "7", orient: "auto-start-reverse",
    });
    marker.append(svgEl("path", { d: "M 0 0 L 8 4 L 0 8 z", fill: "#7a7a7a" }));
    defs.append(marker);
    svg.append(defs);

    for (const node of layout.nodes) {
      const group = svgEl("g", {
        class: `node ${node.kind}`,
        "data-node": node.id,
        transform: `translate(${node.x - NODE_W / 2}, ${node.y - NODE_H / 2})`,
      });
      group.append(
        svgEl("rect", {
          width: String(NODE_W),
          height: String(NODE_H),
          rx: node.kind === "process" ? "18" : "4",
          fill: node.kind === "process" ? "#ffe9c9" : "#dbeafe",
          stroke: "#555",
        }),
      );
      const text = svgEl("text", { x: String(NODE_W / 2), y: "24", "text-anchor": "middle" });
      text.textContent = node.name.length > 18 ? `${node.name.slice(0, 17)}…` : node.name;
      group.append(text);
      if (node.kind === "entity") {
        group.addEventListener("click", () => this.hooks.onOpenEntity(node.id));
      }
      svg.append(group);
    }

    // pan with pointer drag, zoom with the wheel (viewBox manipulation)
    let dragging: { x: number; y: number } | null = null;
    svg.addEventListener("pointerdown", (event) => {
      dragging = { x: (event as PointerEvent).clientX, y: (event as PointerEvent).clientY };
    });
    svg.addEventListener("pointermove", (event) => {
      if (!dragging) return;
      const e = event as PointerEvent;
      const scale = this.viewBox.w / Math.max(1, (svg as unknown as SVGGraphicsElement).getBoundingClientRect?.().width || 800);
      this.viewBox.x -= (e.clientX - dragging.x) * scale;
      this.viewBox.y -= (e.clientY - dragging.y) * scale;
      dragging = { x: e.clientX, y: e.clientY };
      svg.setAttribute(
        "viewBox",
        `${this.viewBox.x} ${this.viewBox.y} ${this.viewBox.w} ${this.viewBox.h}`,
      );
    });
    svg.addEventListener("pointerup", () => {
      dragging = null;
    });
    svg.addEventListener("wheel", (event) => {
      event.preventDefault();
      const factor = (event as WheelEvent).deltaY > 0 ? 1.15 : 0.87;
      this.viewBox.w *= factor;
      this.viewBox.h *= factor;
      svg.setAttribute(
        "viewBox",
        `${this.viewBox.x} ${this.viewBox.y} ${this.viewBox.w} ${this.viewBox.h}`,
      );
    });

    this.container.append(svg);
  }
}
