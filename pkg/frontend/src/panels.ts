import type {
  EntityRef,
  PanelKind,
  SIEDirective,
  SearchRow,
  SeriesRow,
  TargetKind,
} from "./types.js";

const PANEL_ORDER: PanelKind[] = [
  "Background",
  "PatientSearch",
  "ImageAnnotation",
  "PatientFinding",
  "Browser",
];

export type GestureSink = (kind: TargetKind, iri: string) => void;

interface PanelModel {
  kind: PanelKind;
  element: HTMLElement;
  visible: boolean;
}

/** Parsed geometry micro-format -> overlay box in image coordinates. */
export function geometryBox(geometry: string): { x: number; y: number; w: number; h: number } {
  const [kind, body] = geometry.split(":", 2);
  const nums = (body ?? "")
    .split(/[,;]/)
    .map((n) => Number.parseFloat(n))
    .filter((n) => Number.isFinite(n));
  if (kind === "rect" && nums.length === 4) {
    const [x, y, w, h] = nums;
    return { x, y, w, h };
  }
  if (kind === "box3d" && nums.length === 6) {
    const [x, y, , dx, dy] = nums;
    return { x, y, w: dx, h: dy };
  }
  if (kind === "poly" && nums.length >= 6) {
    const xs = nums.filter((_, i) => i % 2 === 0);
    const ys = nums.filter((_, i) => i % 2 === 1);
    const x = Math.min(...xs);
    const y = Math.min(...ys);
    return { x, y, w: Math.max(...xs) - x, h: Math.max(...ys) - y };
  }
  return { x: 0, y: 0, w: 10, h: 10 };
}

/**
 * Owns the panel area: applies directives in order, keeps at most one panel
 * per kind, and wires every rendered entity back to a gesture emitter. Every
 * element that shows an entity carries its IRI in `data-iri`.
 */
export class PanelHost {
  private panels = new Map<PanelKind, PanelModel>();

  constructor(
    private readonly root: HTMLElement,
    private readonly onGesture: GestureSink,
  ) {}

  renderDirectives(directives: SIEDirective[]): void {
    for (const directive of directives) {
      this.apply(directive);
    }
  }

  private apply(directive: SIEDirective): void {
    if (!PANEL_ORDER.includes(directive.panel)) {
      console.warn("skipping directive for unknown panel", directive.panel);
      return;
    }
    switch (directive.action) {
      case "open":
        this.open(directive.panel, directive.payload);
        break;
      case "rearrange":
        this.rearrange(directive.panel, directive.payload);
        break;
      case "highlight":
        this.highlight(directive.panel, directive.payload);
        break;
      case "close":
        this.close(directive.panel);
        break;
      default:
        console.warn("skipping unknown directive action", directive.action);
    }
  }

  panel(kind: PanelKind): HTMLElement | null {
    return this.panels.get(kind)?.element ?? null;
  }

  private ensurePanel(kind: PanelKind): HTMLElement {
    let model = this.panels.get(kind);
    if (!model) {
      const element = document.createElement("section");
      element.className = `panel panel-${kind.toLowerCase()}`;
      element.dataset.panel = kind;
      model = { kind, element, visible: true };
      this.panels.set(kind, model);
    }
    model.visible = true;
    model.element.hidden = false;
    this.reorder();
    return model.element;
  }

  private reorder(): void {
    for (const kind of PANEL_ORDER) {
      const model = this.panels.get(kind);
      if (model) {
        this.root.appendChild(model.element);
      }
    }
  }

  private open(kind: PanelKind, payload: Record<string, unknown>): void {
    const element = this.ensurePanel(kind);
    element.replaceChildren();
    const heading = document.createElement("h2");
    heading.textContent = kind;
    element.appendChild(heading);
    if (kind === "PatientSearch") {
      this.renderResults(element, payload);
    } else if (kind === "ImageAnnotation") {
      this.renderImages(element, payload);
    } else if (kind === "PatientFinding") {
      this.renderFindings(element, payload);
    } else if (kind === "Browser") {
      this.renderConcept(element, payload);
    }
  }

  private rearrange(kind: PanelKind, payload: Record<string, unknown>): void {
    this.ensurePanel(kind);
    if (typeof payload.focus === "string") {
      this.root.dataset.focus = payload.focus;
    }
    if (typeof payload.layout === "string") {
      this.root.dataset.layout = payload.layout;
    }
    if (kind === "ImageAnnotation" && payload.region) {
      const region = payload.region as { iri: string };
      this.markSelected(region.iri);
    }
  }

  private markSelected(iri: string): void {
    for (const selected of this.root.querySelectorAll(".region-overlay.selected")) {
      selected.classList.remove("selected");
    }
    const overlay = this.findByIri(iri);
    overlay?.classList.add("selected");
  }

  private highlight(kind: PanelKind, payload: Record<string, unknown>): void {
    this.ensurePanel(kind);
    const region = payload.region as { iri: string } | undefined;
    if (!region) return;
    const overlay = this.findByIri(region.iri);
    if (!overlay) return;
    overlay.classList.add("highlighted");
    const label = payload.label as { iri: string; label: string; code: string } | undefined;
    if (label) {
      const existing = overlay.querySelector(`.label-chip[data-iri="${label.iri}"]`);
      if (!existing) {
        const chip = document.createElement("span");
        chip.className = "label-chip";
        chip.dataset.iri = label.iri;
        chip.textContent = `${label.label} (${label.code})`;
        overlay.appendChild(chip);
      }
    }
  }

  private close(kind: PanelKind): void {
    const model = this.panels.get(kind);
    if (model) {
      model.visible = false;
      model.element.hidden = true;
    }
  }

  private findByIri(iri: string): HTMLElement | null {
    for (const el of this.root.querySelectorAll<HTMLElement>("[data-iri]")) {
      if (el.dataset.iri === iri) return el;
    }
    return null;
  }

  private clickable(element: HTMLElement, kind: TargetKind, iri: string): void {
    element.dataset.iri = iri;
    element.addEventListener("click", (event) => {
      event.stopPropagation();
      this.onGesture(kind, iri);
    });
  }

  private renderResults(element: HTMLElement, payload: Record<string, unknown>): void {
    const results = (payload.results as SearchRow[] | undefined) ?? [];
    const table = document.createElement("table");
    table.className = "record-table";
    for (const row of results) {
      const tr = document.createElement("tr");
      tr.className = "record-row";
      const name = document.createElement("td");
      name.textContent = row.name;
      const score = document.createElement("td");
      score.textContent = row.score.toFixed(3);
      tr.append(name, score);
      this.clickable(tr, "patient", row.iri);
      table.appendChild(tr);
    }
    element.appendChild(table);
    if (results.length === 0) {
      const empty = document.createElement("p");
      empty.textContent = "No matching records.";
      element.appendChild(empty);
    }
  }

  private renderImages(element: HTMLElement, payload: Record<string, unknown>): void {
    const patient = payload.patient as EntityRef | undefined;
    if (patient) {
      const caption = document.createElement("p");
      caption.className = "patient-caption";
      caption.textContent = patient.name ?? patient.iri;
      caption.dataset.iri = patient.iri;
      element.appendChild(caption);
    }
    const series = (payload.series as SeriesRow[] | undefined) ?? [];
    for (const row of series) {
      const block = document.createElement("div");
      block.className = "series-block";
      block.dataset.iri = row.iri;
      const header = document.createElement("h3");
      header.textContent = `${row.description || row.bodyPart || "Series"} (${row.images.length})`;
      block.appendChild(header);
      const strip = document.createElement("div");
      strip.className = "image-strip";
      for (const image of row.images) {
        // placeholder bitmap frame; pixel rendering is out of scope
        const frame = document.createElement("div");
        frame.className = "image-frame";
        this.clickable(frame, "image", image.iri);
        for (const region of row.regions) {
          if (region.target.iri !== image.iri) continue;
          const box = geometryBox(region.geometry);
          const overlay = document.createElement("div");
          overlay.className = "region-overlay";
          overlay.style.left = `${box.x}px`;
          overlay.style.top = `${box.y}px`;
          overlay.style.width = `${box.w}px`;
          overlay.style.height = `${box.h}px`;
          this.clickable(overlay, "region", region.iri);
          frame.appendChild(overlay);
        }
        strip.appendChild(frame);
      }
      // volume-level regions (3D boxes on the series itself)
      for (const region of row.regions) {
        if (region.target.iri !== row.iri) continue;
        const overlay = document.createElement("div");
        overlay.className = "region-overlay volume";
        overlay.textContent = region.geometry;
        this.clickable(overlay, "region", region.iri);
        strip.appendChild(overlay);
      }
      block.appendChild(strip);
      element.appendChild(block);
    }
  }

  private renderFindings(element: HTMLElement, payload: Record<string, unknown>): void {
    const patient = payload.patient as EntityRef | undefined;
    if (patient) {
      const caption = document.createElement("p");
      caption.className = "patient-caption";
      caption.dataset.iri = patient.iri;
      caption.textContent = patient.name ?? patient.iri;
      element.appendChild(caption);
    }
    const text = document.createElement("pre");
    text.className = "findings-text";
    text.textContent = String(payload.text ?? "");
    element.appendChild(text);
    const groups = (payload.termGroups ?? {}) as Record<string, EntityRef[]>;
    for (const dimension of ["anatomy", "imaging", "disease"]) {
      const terms = groups[dimension] ?? [];
      if (terms.length === 0) continue;
      const row = document.createElement("div");
      row.className = `term-group term-group-${dimension}`;
      for (const term of terms) {
        const chip = document.createElement("span");
        chip.className = "term-chip";
        chip.dataset.iri = term.iri;
        chip.textContent = term.label ?? term.iri;
        row.appendChild(chip);
      }
      element.appendChild(row);
    }
  }

  private renderConcept(element: HTMLElement, payload: Record<string, unknown>): void {
    const concept = payload.concept as EntityRef | undefined;
    if (concept) {
      const title = document.createElement("p");
      title.dataset.iri = concept.iri;
      title.className = "concept-title";
      title.textContent = concept.label ?? concept.iri;
      element.appendChild(title);
    }
    for (const relation of ["parents", "children", "wholes", "parts"]) {
      const entries = (payload[relation] as EntityRef[] | undefined) ?? [];
      if (entries.length === 0) continue;
      const list = document.createElement("ul");
      list.className = `concept-${relation}`;
      for (const entry of entries) {
        const item = document.createElement("li");
        item.dataset.iri = entry.iri;
        item.textContent = entry.label ?? entry.iri;
        list.appendChild(item);
      }
      element.appendChild(list);
    }
  }
}
