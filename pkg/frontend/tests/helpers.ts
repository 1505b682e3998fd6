import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import type { WireKeyEvent } from "../src/types";

export const PASSPHRASE = "frontend-test-passphrase";

export interface RunningService {
  baseUrl: string;
  process: ChildProcess;
  profilesDir: string;
}

/** Start the verification service on an ephemeral port and wait for it. */
export async function startService(
  extraArgs: string[] = [],
): Promise<RunningService> {
  const profilesDir = mkdtempSync(join(tmpdir(), "keyface-frontend-"));
  const child = spawn(
    "python3",
    [
      "-m",
      "keyface.cli",
      "--profiles-dir",
      profilesDir,
      ...extraArgs,
      "serve",
      "--host",
      "127.0.0.1",
      "--port",
      "0",
    ],
    {
      env: { ...process.env, KEYFACE_PASSPHRASE: PASSPHRASE },
      stdio: ["ignore", "pipe", "pipe"],
    },
  );

  const baseUrl = await new Promise<string>((resolve, reject) => {
    let stderr = "";
    const timer = setTimeout(
      () => reject(new Error(`service did not start:\n${stderr}`)),
      30_000,
    );
    child.stderr!.on("data", (chunk: Buffer) => {
      stderr += chunk.toString();
      const match = stderr.match(/serving on (http:\/\/[^\s]+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited early (code ${code}):\n${stderr}`));
    });
  });

  for (let i = 0; i < 100; i++) {
    try {
      const response = await fetch(`${baseUrl}/healthz`);
      if (response.ok) return { baseUrl, process: child, profilesDir };
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  child.kill();
  throw new Error("service never became healthy");
}

export function stopService(service: RunningService): void {
  service.process.kill();
}

/** Deterministic PRNG so simulated typing is reproducible. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** A plausible typed attempt at an n-key password. */
export function typedEvents(rand: () => number, nKeys = 6): WireKeyEvent[] {
  const events: WireKeyEvent[] = [];
  let press = 0;
  for (let i = 0; i < nKeys; i++) {
    const duration = 80 + Math.floor(rand() * 13) - 6;
    events.push({
      key_label: `k${i}`,
      press_ms: press,
      release_ms: press + duration,
    });
    press = press + duration + 70 + Math.floor(rand() * 13) - 6;
  }
  return events;
}

/** A deterministic synthetic "face": smooth gradient plus per-user offset. */
export function syntheticFacePixels(userSeed: number, jitterSeed = 0): Uint8Array {
  const rand = mulberry32(userSeed * 7919 + jitterSeed);
  const pixels = new Uint8Array(64 * 64);
  for (let y = 0; y < 64; y++) {
    for (let x = 0; x < 64; x++) {
      const base = 60 + ((x * 2 + y + userSeed * 37) % 130);
      const noise = Math.floor(rand() * 21) - 10;
      pixels[y * 64 + x] = Math.max(0, Math.min(255, base + noise));
    }
  }
  return pixels;
}
