import type { GestureCapture, TargetKind } from "./types.js";

/**
 * Buffers pointing gestures between dialogue turns.
 *
 * Timestamps are taken at capture time (inside the click handler) and kept
 * strictly monotone per session so the server's most-recent-wins fusion is
 * never confused by clock granularity.
 */
export class GestureBuffer {
  private buffered: GestureCapture[] = [];
  private lastMillis = 0;

  constructor(private readonly now: () => number = Date.now) {}

  capture(targetKind: TargetKind, targetId: string): GestureCapture {
    let millis = this.now();
    if (millis <= this.lastMillis) {
      millis = this.lastMillis + 1;
    }
    this.lastMillis = millis;
    const gesture: GestureCapture = {
      targetKind,
      targetId,
      timestamp: new Date(millis).toISOString(),
    };
    this.buffered.push(gesture);
    return gesture;
  }

  /** Gestures captured since the last drain; clears the buffer. */
  drain(): GestureCapture[] {
    const out = this.buffered;
    this.buffered = [];
    return out;
  }

  peek(): readonly GestureCapture[] {
    return this.buffered;
  }

  get size(): number {
    return this.buffered.length;
  }
}
