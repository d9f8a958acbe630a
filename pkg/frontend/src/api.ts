import type { GestureCapture, StreamEvent, SystemResponse } from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * HTTP client for the dialogue service: turn submission plus the
 * newline-delimited JSON event stream (one JSON object per line over a
 * long-lived response; not SSE framing).
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  async sendTurn(
    sessionId: string,
    text: string,
    pointing: GestureCapture[],
  ): Promise<SystemResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/dialogue/turn`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ sessionId, text, pointing }),
    });
    if (!response.ok) {
      const detail = await response.text();
      throw new Error(`turn failed (${response.status}): ${detail}`);
    }
    return (await response.json()) as SystemResponse;
  }

  /**
   * Consume the session event stream until it closes or `signal` aborts.
   * Lines may arrive split across chunks; partial tails are kept until
   * their newline shows up.
   */
  async streamEvents(
    sessionId: string,
    onEvent: (event: StreamEvent) => void,
    signal?: AbortSignal,
  ): Promise<void> {
    const response = await this.fetchImpl(`${this.baseUrl}/events/${sessionId}`, { signal });
    if (!response.ok || !response.body) {
      throw new Error(`event stream failed (${response.status})`);
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let tail = "";
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        tail += decoder.decode(value, { stream: true });
        let index;
        while ((index = tail.indexOf("\n")) >= 0) {
          const line = tail.slice(0, index).trim();
          tail = tail.slice(index + 1);
          if (line) {
            onEvent(JSON.parse(line) as StreamEvent);
          }
        }
      }
    } finally {
      reader.releaseLock();
    }
  }
}

/** Parse a complete ndjson buffer (used by tests and replay). */
export function parseNdjson(buffer: string): StreamEvent[] {
  return buffer
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0)
    .map((line) => JSON.parse(line) as StreamEvent);
}
