/** Tiny DOM helpers shared by the views. */

export function el(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "text") node.textContent = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function svgEl(tag: string, attrs: Record<string, string> = {}): SVGElement {
  const node = document.createElementNS("http://www.w3.org/2000/svg", tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  return node;
}

/** Non-blocking error banner; API failures surface here and never throw out. */
export function errorBanner(container: HTMLElement, err: unknown): void {
  const message = err instanceof Error ? err.message : String(err);
  const banner = el("div", { class: "banner error", role: "alert", text: message });
  container.prepend(banner);
  setTimeout(() => banner.remove(), 6000);
}
