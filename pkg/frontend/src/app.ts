import { ApiClient } from "./api.js";
import { GestureBuffer } from "./gestures.js";
import { PanelHost } from "./panels.js";
import { TranscriptView } from "./transcript.js";
import type { SIEDirective, StreamEvent } from "./types.js";

const GESTURE_IDLE_MS = 5000;

export interface AppOptions {
  sessionId?: string;
  /** auto-submit delay for gesture-only turns; pass 0 to disable */
  gestureIdleMs?: number;
  subscribeStream?: boolean;
}

/**
 * Clinician console: text input plus clickable panels. Gestures buffer
 * until the next utterance; a click with no utterance for five seconds is
 * sent as a gesture-only turn, mirroring the server's selection semantics.
 */
export class MedicoApp {
  readonly sessionId: string;
  readonly gestures = new GestureBuffer();
  readonly panels: PanelHost;
  readonly transcript: TranscriptView;
  private readonly input: HTMLInputElement;
  private readonly sendButton: HTMLButtonElement;
  private idleTimer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private readonly gestureIdleMs: number;
  private readonly abort = new AbortController();

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.sessionId = options.sessionId ?? `console-${Math.random().toString(36).slice(2)}`;
    this.gestureIdleMs = options.gestureIdleMs ?? GESTURE_IDLE_MS;

    const transcriptRoot = document.createElement("div");
    transcriptRoot.className = "transcript-root";
    const form = document.createElement("form");
    form.className = "turn-form";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Speak to the system…";
    this.sendButton = document.createElement("button");
    this.sendButton.type = "submit";
    this.sendButton.textContent = "send";
    form.append(this.input, this.sendButton);
    const panelRoot = document.createElement("div");
    panelRoot.className = "panel-root";
    root.append(transcriptRoot, form, panelRoot);

    this.transcript = new TranscriptView(transcriptRoot);
    this.panels = new PanelHost(panelRoot, (kind, iri) => this.onGesture(kind, iri));

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.sendTurn(this.input.value);
    });
    this.refreshSendState();
    this.input.addEventListener("input", () => this.refreshSendState());

    if (options.subscribeStream ?? false) {
      void this.api
        .streamEvents(this.sessionId, (event) => this.onStreamEvent(event), this.abort.signal)
        .catch(() => {
          /* stream closed; panel state still follows turn responses */
        });
    }
  }

  dispose(): void {
    this.abort.abort();
    if (this.idleTimer) clearTimeout(this.idleTimer);
  }

  private refreshSendState(): void {
    // empty text with no buffered gestures has nothing to say
    this.sendButton.disabled = this.input.value.trim() === "" && this.gestures.size === 0;
  }

  private onGesture(kind: string, iri: string): void {
    this.gestures.capture(kind as never, iri);
    this.refreshSendState();
    if (this.gestureIdleMs > 0) {
      if (this.idleTimer) clearTimeout(this.idleTimer);
      this.idleTimer = setTimeout(() => {
        if (this.gestures.size > 0 && !this.inFlight) {
          void this.sendTurn("");
        }
      }, this.gestureIdleMs);
    }
  }

  async sendTurn(text: string): Promise<void> {
    const trimmed = text.trim();
    const pointing = this.gestures.drain();
    if (trimmed === "" && pointing.length === 0) {
      return;
    }
    if (this.idleTimer) {
      clearTimeout(this.idleTimer);
      this.idleTimer = null;
    }
    if (trimmed) {
      this.transcript.addUser(trimmed);
    }
    this.inFlight = true;
    try {
      const response = await this.api.sendTurn(this.sessionId, trimmed, pointing);
      this.transcript.addSystem(response.speakText);
      this.panels.renderDirectives(response.directives);
      this.input.value = "";
    } catch (error) {
      this.transcript.addError(String(error), () => void this.sendTurn(trimmed));
    } finally {
      this.inFlight = false;
      this.refreshSendState();
    }
  }

  private onStreamEvent(event: StreamEvent): void {
    if (event.event === "directive") {
      const { event: _tag, ...directive } = event;
      this.panels.renderDirectives([directive as unknown as SIEDirective]);
    }
  }
}

/** Browser entry point. */
export function mount(root: HTMLElement, baseUrl = ""): MedicoApp {
  return new MedicoApp(root, new ApiClient(baseUrl), { subscribeStream: true });
}
