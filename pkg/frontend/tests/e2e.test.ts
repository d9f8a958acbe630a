/**
 * Full click-through of the scripted five-turn dialogue against a live
 * server process, driving the real DOM console.
 */
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { MedicoApp } from "../src/app.js";
import type { StreamEvent } from "../src/types.js";

const PORT = 23000 + Math.floor(Math.random() * 2000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;

async function waitForHealth(): Promise<void> {
  const deadline = Date.now() + 30000;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/health`);
      if (response.ok) return;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) throw new Error("server did not become healthy");
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "medico-e2e-"));
  server = spawn(
    "python3",
    ["-m", "medico.cli", "serve", "--data-dir", dataDir, "--port", String(PORT)],
    { stdio: "ignore" },
  );
  await waitForHealth();
});

afterAll(() => {
  server?.kill();
});

describe("scripted click-through", () => {
  it("runs the five turns end to end with region highlight and label chip", async () => {
    const root = document.createElement("div");
    document.body.replaceChildren(root);
    const api = new ApiClient(BASE);
    const app = new MedicoApp(root, api, { sessionId: "e2e-script", gestureIdleMs: 0 });

    // collect pushed events concurrently to check directive ordering
    const streamed: StreamEvent[] = [];
    const abort = new AbortController();
    const streaming = api
      .streamEvents("e2e-script", (event) => streamed.push(event), abort.signal)
      .catch(() => {});
    const expectedOrder: string[] = [];

    const sendAndTrack = async (text: string) => {
      await app.sendTurn(text);
      const last = root.querySelectorAll(".turn-system");
      expect(last.length).toBeGreaterThan(0);
    };

    // turn 1: record search
    await sendAndTrack("Show me my patient records, lymphoma cases, for this week.");
    expectedOrder.push("open/PatientSearch");
    const row = root.querySelector<HTMLElement>('.record-row[data-iri="urn:medico:patient:P001"]');
    expect(row).not.toBeNull();
    expect(row!.textContent).toContain("Anna Schmidt");

    // turn 2: click the record, open the images
    row!.click();
    await sendAndTrack(
      "Open the images, internal organs: lungs, liver, then spleen and colon of this patient.",
    );
    expectedOrder.push("open/ImageAnnotation", "rearrange/Background");
    const frames = root.querySelectorAll(".image-frame");
    expect(frames.length).toBeGreaterThanOrEqual(13);
    const overlay = [...root.querySelectorAll<HTMLElement>(".region-overlay")].find(
      (el) => el.dataset.iri?.startsWith("urn:medico:region:") && !el.classList.contains("volume"),
    );
    expect(overlay).toBeTruthy();
    const regionIri = overlay!.dataset.iri!;

    // turn 3a: click the region; gesture-only turn selects it
    overlay!.click();
    await app.sendTurn("");
    expectedOrder.push("rearrange/ImageAnnotation");
    expect(root.querySelector(".region-overlay.selected")).not.toBeNull();

    // turn 3b: point again and annotate
    overlay!.click();
    await sendAndTrack("This lymph node here, annotate Hodgkin-Lymphoma.");
    expectedOrder.push("highlight/ImageAnnotation");
    const highlighted = root.querySelector<HTMLElement>(".region-overlay.highlighted");
    expect(highlighted).not.toBeNull();
    expect(highlighted!.dataset.iri).toBe(regionIri);
    const chip = highlighted!.querySelector(".label-chip");
    expect(chip).not.toBeNull();
    expect(chip!.textContent).toBe("Hodgkin lymphoma (C81)");
    const transcript = [...root.querySelectorAll(".turn-system")].map((el) => el.textContent);
    expect(transcript.at(-1)).toBe("S: Hodgkin lymphoma in lymph node");

    // turn 4: similar lesions, Peter Maier first
    await sendAndTrack("Find similar lesions with characteristics: hyper-intense and/or coarse texture.");
    expectedOrder.push("open/PatientSearch", "open/ImageAnnotation");
    const resultRows = root.querySelectorAll<HTMLElement>(".panel-patientsearch .record-row");
    expect(resultRows.length).toBeGreaterThanOrEqual(2);
    expect(resultRows[0].textContent).toContain("Peter Maier");

    // turn 5: findings of the comparison patient
    await sendAndTrack("Get the findings of this patient");
    expectedOrder.push("open/PatientFinding");
    const findings = root.querySelector(".panel-patientfinding");
    expect(findings).not.toBeNull();
    expect(findings!.querySelector(".patient-caption")!.textContent).toBe("Peter Maier");
    expect(findings!.querySelectorAll(".term-group-imaging .term-chip")).toHaveLength(2);
    expect(findings!.querySelector(".findings-text")!.textContent).toContain("Hodgkin lymphoma");

    // the pushed event stream delivered every directive in application order
    await new Promise((resolve) => setTimeout(resolve, 300));
    const streamedOrder = streamed
      .filter((event) => event.event === "directive")
      .map((event) => `${event.action}/${event.panel}`);
    expect(streamedOrder).toEqual(expectedOrder);
    abort.abort();
    await streaming;
    app.dispose();
  });

  it("form input sends a turn and renders the reply", async () => {
    const root = document.createElement("div");
    document.body.replaceChildren(root);
    const app = new MedicoApp(root, new ApiClient(BASE), {
      sessionId: "e2e-form",
      gestureIdleMs: 0,
    });
    const input = root.querySelector<HTMLInputElement>("input")!;
    const form = root.querySelector<HTMLFormElement>("form")!;
    input.value = "Navigate to lymph node";
    input.dispatchEvent(new Event("input"));
    form.dispatchEvent(new Event("submit"));
    await new Promise((resolve) => setTimeout(resolve, 1500));
    const browser = root.querySelector(".panel-browser");
    expect(browser).not.toBeNull();
    expect(browser!.textContent).toContain("Lymph node");
    app.dispose();
  });

  it("send is disabled with empty text and no gestures", () => {
    const root = document.createElement("div");
    document.body.replaceChildren(root);
    const app = new MedicoApp(root, new ApiClient(BASE), { sessionId: "e2e-guard" });
    const button = root.querySelector<HTMLButtonElement>("button[type=submit]")!;
    expect(button.disabled).toBe(true);
    app.dispose();
  });
});
