/** Dialogue transcript: user turns, system replies, error entries. */
export class TranscriptView {
  private readonly list: HTMLElement;

  constructor(root: HTMLElement) {
    this.list = document.createElement("ol");
    this.list.className = "transcript";
    root.appendChild(this.list);
  }

  addUser(text: string): void {
    this.entry("user", `R: ${text}`);
  }

  addSystem(text: string): void {
    this.entry("system", `S: ${text}`);
  }

  addError(text: string, retry?: () => void): void {
    const item = this.entry("error", text);
    if (retry) {
      const button = document.createElement("button");
      button.textContent = "retry";
      button.className = "retry";
      button.addEventListener("click", retry);
      item.appendChild(button);
    }
  }

  private entry(kind: string, text: string): HTMLElement {
    const item = document.createElement("li");
    item.className = `turn turn-${kind}`;
    item.textContent = text;
    this.list.appendChild(item);
    return item;
  }
}
