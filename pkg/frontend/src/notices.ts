/** Dismissible notice strip. Server log errors and failed requests
 *  land here instead of a hidden console. */

export class Notices {
  private host: HTMLElement;

  constructor(host: HTMLElement) {
    this.host = host;
  }

  show(text: string, kind: "error" | "info" = "error"): void {
    const box = document.createElement("div");
    box.className = `notice notice-${kind}`;
    const span = document.createElement("span");
    span.textContent = text;
    const btn = document.createElement("button");
    btn.textContent = "×";
    btn.title = "dismiss";
    btn.addEventListener("click", () => box.remove());
    box.append(span, btn);
    this.host.prepend(box);
    // keep the strip from growing without bound
    while (this.host.children.length > 8) {
      this.host.lastElementChild?.remove();
    }
  }
}
