import { describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { MedicoApp } from "../src/app.js";
import type { SystemResponse } from "../src/types.js";

function okResponse(speakText: string, directives: SystemResponse["directives"] = []): Response {
  return new Response(
    JSON.stringify({ sessionId: "s", speakText, directives }),
    { status: 200, headers: { "content-type": "application/json" } },
  );
}

function buildApp(fetchImpl: (url: string, init?: RequestInit) => Promise<Response>, idleMs = 0) {
  const root = document.createElement("div");
  document.body.replaceChildren(root);
  const api = new ApiClient("http://server", fetchImpl);
  const app = new MedicoApp(root, api, { sessionId: "s", gestureIdleMs: idleMs });
  return { root, app };
}

describe("MedicoApp", () => {
  it("renders speakText into the transcript and applies directives", async () => {
    const { root, app } = buildApp(async () =>
      okResponse("Showing 1 matching patient record.", [
        {
          action: "open",
          panel: "PatientSearch",
          payload: { results: [{ iri: "urn:medico:patient:P1", name: "Anna Schmidt", score: 1 }] },
        },
      ]),
    );
    await app.sendTurn("Show me my patient records, lymphoma cases, for this week.");
    expect([...root.querySelectorAll(".turn-user")].at(-1)!.textContent).toContain("lymphoma");
    expect([...root.querySelectorAll(".turn-system")].at(-1)!.textContent).toBe(
      "S: Showing 1 matching patient record.",
    );
    expect(root.querySelectorAll(".record-row")).toHaveLength(1);
  });

  it("network failure adds an error entry with a retry affordance", async () => {
    let calls = 0;
    const { root, app } = buildApp(async () => {
      calls += 1;
      if (calls === 1) throw new Error("connection refused");
      return okResponse("recovered");
    });
    await app.sendTurn("hello");
    const error = root.querySelector(".turn-error");
    expect(error).not.toBeNull();
    const retry = error!.querySelector<HTMLButtonElement>("button.retry");
    expect(retry).not.toBeNull();
    retry!.click();
    await new Promise((resolve) => setTimeout(resolve, 10));
    expect([...root.querySelectorAll(".turn-system")].at(-1)!.textContent).toBe("S: recovered");
  });

  it("a lone gesture is auto-sent as a gesture-only turn after the idle delay", async () => {
    vi.useFakeTimers();
    const bodies: unknown[] = [];
    const { root, app } = buildApp(async (_url, init) => {
      bodies.push(JSON.parse(String(init?.body)));
      return okResponse("Noted.");
    }, 5000);
    // a rendered patient row to click
    app.panels.renderDirectives([
      {
        action: "open",
        panel: "PatientSearch",
        payload: { results: [{ iri: "urn:medico:patient:P1", name: "Anna", score: 1 }] },
      },
    ]);
    root.querySelector<HTMLElement>(".record-row")!.click();
    expect(bodies).toHaveLength(0);
    await vi.advanceTimersByTimeAsync(5100);
    vi.useRealTimers();
    expect(bodies).toHaveLength(1);
    const body = bodies[0] as { text: string; pointing: unknown[] };
    expect(body.text).toBe("");
    expect(body.pointing).toHaveLength(1);
    app.dispose();
  });

  it("a gesture followed by an utterance rides along with that turn", async () => {
    const bodies: Array<{ text: string; pointing: unknown[] }> = [];
    const { root, app } = buildApp(async (_url, init) => {
      bodies.push(JSON.parse(String(init?.body)));
      return okResponse("ok");
    }, 5000);
    app.panels.renderDirectives([
      {
        action: "open",
        panel: "PatientSearch",
        payload: { results: [{ iri: "urn:medico:patient:P1", name: "Anna", score: 1 }] },
      },
    ]);
    root.querySelector<HTMLElement>(".record-row")!.click();
    await app.sendTurn("Open the images of this patient.");
    expect(bodies).toHaveLength(1);
    expect(bodies[0].pointing).toHaveLength(1);
    expect(bodies[0].text).toContain("Open the images");
    app.dispose();
  });
});
