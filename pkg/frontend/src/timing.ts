/** Keystroke capture: turns keydown/keyup pairs into submittable events.
 *
 * Timestamps come from a monotonic high-resolution source (performance.now
 * in the browser); wall-clock time is never used. The session tolerates
 * rollover typing (the next key down before the previous key up) and
 * restarts the attempt on backspace. No feature math happens here: the
 * server owns all duration/latency computation.
 */

import type { WireKeyEvent } from "./types";

export interface ClientKeyEvent {
  keyLabel: string;
  press: number; // high-resolution ms, not yet rounded
  release: number;
}

// Keys that never produce a password character.
const IGNORED_KEYS = new Set([
  "Shift",
  "Control",
  "Alt",
  "Meta",
  "CapsLock",
  "Tab",
  "Escape",
  "Enter",
  "ArrowLeft",
  "ArrowRight",
  "ArrowUp",
  "ArrowDown",
]);

export type SessionState = "typing" | "complete" | "discarded";

export class TypingSession {
  private readonly passwordLength: number;
  private pending = new Map<string, number>();
  private completed: ClientKeyEvent[] = [];
  private discardReason: string | null = null;

  constructor(passwordLength: number) {
    if (passwordLength < 2) {
      throw new Error("password must have at least 2 characters");
    }
    this.passwordLength = passwordLength;
  }

  /** Handle a keydown. Returns true when the event was recorded. */
  keyDown(key: string, timestamp: number, repeat = false): boolean {
    if (key === "Backspace") {
      this.reset();
      return false;
    }
    if (repeat || IGNORED_KEYS.has(key) || key.length !== 1) {
      return false;
    }
    if (this.pending.has(key)) {
      return false; // auto-repeat without the repeat flag
    }
    if (this.eventCount() >= this.passwordLength) {
      return false; // extra characters beyond the password are not timed
    }
    this.pending.set(key, timestamp);
    return true;
  }

  /** Handle a keyup for a previously recorded press. */
  keyUp(key: string, timestamp: number): boolean {
    const press = this.pending.get(key);
    if (press === undefined) {
      return false;
    }
    this.pending.delete(key);
    this.completed.push({
      keyLabel: key,
      press,
      release: Math.max(timestamp, press),
    });
    return true;
  }

  /** Focus lost (or similar) while a key is still down: the attempt dies. */
  abortIfIncomplete(reason = "capture interrupted mid-press"): void {
    if (this.pending.size > 0) {
      this.reset();
      this.discardReason = reason;
    }
  }

  reset(): void {
    this.pending.clear();
    this.completed = [];
    this.discardReason = null;
  }

  eventCount(): number {
    return this.completed.length + this.pending.size;
  }

  state(): SessionState {
    if (this.discardReason !== null) return "discarded";
    if (
      this.completed.length === this.passwordLength &&
      this.pending.size === 0
    ) {
      return "complete";
    }
    return "typing";
  }

  lastDiscardReason(): string | null {
    return this.discardReason;
  }

  /** Submission is only possible for a complete, fully released attempt. */
  canSubmit(): boolean {
    return this.state() === "complete";
  }

  /**
   * Events for the wire: ordered by press time, rounded to integer ms,
   * every release strictly after its press (1 ms clock precision).
   */
  toWireEvents(): WireKeyEvent[] {
    if (!this.canSubmit()) {
      throw new Error("attempt is not complete");
    }
    const ordered = [...this.completed].sort((a, b) => a.press - b.press);
    const origin = ordered[0].press;
    return ordered.map((e) => {
      const press = Math.round(e.press - origin);
      const release = Math.round(e.release - origin);
      return {
        key_label: e.keyLabel,
        press_ms: press,
        release_ms: release > press ? release : press + 1,
      };
    });
  }
}

/**
 * Smallest positive step the high-resolution timer exposes, in ms.
 * Browsers coarsen performance.now well past the 1 ms the capture format
 * assumes; the measured value travels with each submission so the server
 * can log capture quality.
 */
export function measureTimerGranularityMs(
  now: () => number = () => performance.now(),
  samples = 200,
): number {
  let smallest = Infinity;
  let previous = now();
  for (let i = 0; i < samples; i++) {
    const t = now();
    if (t > previous) {
      smallest = Math.min(smallest, t - previous);
      previous = t;
    }
  }
  return smallest === Infinity ? 0 : smallest;
}
