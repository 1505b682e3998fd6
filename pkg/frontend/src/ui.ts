/** Page wiring: password field capture, webcam frames, submission, feedback.
 *
 * The page never computes features; raw key timings and encoded frames go
 * to the service, which owns all of the math. The password itself never
 * leaves the browser: submissions carry its length and a hash only.
 */

import { ApiError, getUserStatus, submitCapture } from "./api";
import { frameToPayload, rgbaToGray, FACE_SIZE, type CropBox } from "./pgm";
import { measureTimerGranularityMs, TypingSession } from "./timing";
import type { CaptureSubmission, EnrollResponse, VerifyResponse } from "./types";

const ENROLL_FRAMES = 20;
const VERIFY_FRAMES = 1;
const FRAME_INTERVAL_MS = 150;

interface Elements {
  userId: HTMLInputElement;
  password: HTMLInputElement;
  video: HTMLVideoElement;
  guide: HTMLDivElement;
  enrollButton: HTMLButtonElement;
  verifyButton: HTMLButtonElement;
  retryButton: HTMLButtonElement;
  outcome: HTMLDivElement;
  message: HTMLDivElement;
  keystrokeProgress: HTMLProgressElement;
  faceProgress: HTMLProgressElement;
  progressText: HTMLDivElement;
}

function grabElements(): Elements {
  const byId = <T extends HTMLElement>(id: string): T => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
  };
  return {
    userId: byId("user-id"),
    password: byId("password"),
    video: byId("camera"),
    guide: byId("guide-box"),
    enrollButton: byId("enroll"),
    verifyButton: byId("verify"),
    retryButton: byId("retry"),
    outcome: byId("outcome"),
    message: byId("message"),
    keystrokeProgress: byId("keystroke-progress"),
    faceProgress: byId("face-progress"),
    progressText: byId("progress-text"),
  };
}

export class CapturePage {
  private readonly els: Elements;
  private readonly baseUrl: string;
  private session: TypingSession | null = null;
  private camera: MediaStream | null = null;
  private cameraDenied = false;
  private inFlight = false;
  private lastSubmission: CaptureSubmission | null = null;

  constructor(baseUrl: string, els: Elements) {
    this.baseUrl = baseUrl;
    this.els = els;
  }

  async start(): Promise<void> {
    const { password, enrollButton, verifyButton, retryButton } = this.els;
    password.addEventListener("keydown", (e) => this.onKeyDown(e));
    password.addEventListener("keyup", (e) => this.onKeyUp(e));
    password.addEventListener("blur", () => {
      this.session?.abortIfIncomplete();
      this.refreshGating();
      if (this.session?.state() === "discarded") {
        this.showMessage("Capture interrupted — please retype the password.");
      }
    });
    enrollButton.addEventListener("click", () => void this.submit("enroll"));
    verifyButton.addEventListener("click", () => void this.submit("verify"));
    retryButton.addEventListener("click", () => void this.retry());

    try {
      this.camera = await navigator.mediaDevices.getUserMedia({ video: true });
      this.els.video.srcObject = this.camera;
      await this.els.video.play();
    } catch {
      this.cameraDenied = true;
      this.showMessage(
        "Camera permission denied: the face modality is disabled for this session.",
      );
    }
    this.refreshGating();
  }

  private onKeyDown(event: KeyboardEvent): void {
    if (event.key === "Enter") return;
    if (this.session === null || this.els.password.value.length === 0) {
      const length = this.els.password.maxLength > 0 ? this.els.password.maxLength : 10;
      this.session = new TypingSession(length);
    }
    this.session.keyDown(event.key, performance.now(), event.repeat);
    if (event.key === "Backspace") {
      this.els.password.value = "";
      event.preventDefault();
      this.showMessage("Attempt restarted.");
    }
    this.refreshGating();
  }

  private onKeyUp(event: KeyboardEvent): void {
    this.session?.keyUp(event.key, performance.now());
    this.refreshGating();
  }

  private refreshGating(): void {
    const ready = this.session?.canSubmit() ?? false;
    this.els.enrollButton.disabled = !ready || this.inFlight;
    this.els.verifyButton.disabled = !ready || this.inFlight;
  }

  private async submit(kind: "enroll" | "verify"): Promise<void> {
    if (!this.session?.canSubmit() || this.inFlight) return;
    const userId = this.els.userId.value.trim();
    if (!userId) {
      this.showMessage("Enter a user id first.");
      return;
    }
    this.inFlight = true;
    this.refreshGating();
    try {
      const frames = await this.captureFrames(kind, userId);
      const submission: CaptureSubmission = {
        user_id: userId,
        attempt_kind: kind,
        key_events: this.session.toWireEvents(),
        face_frames: frames,
        password_length: this.els.password.value.length,
        password_hash: await hashPassword(this.els.password.value),
        timer_granularity_ms: measureTimerGranularityMs(),
      };
      this.lastSubmission = submission;
      const response = await submitCapture(this.baseUrl, submission);
      this.showDecision(kind, response);
    } catch (error) {
      this.showFailure(error);
    } finally {
      this.inFlight = false;
      this.session = null;
      this.els.password.value = "";
      this.refreshGating();
      await this.refreshProgress();
    }
  }

  private async retry(): Promise<void> {
    if (!this.lastSubmission || this.inFlight) return;
    this.inFlight = true;
    try {
      const response = await submitCapture(this.baseUrl, this.lastSubmission);
      this.showDecision(this.lastSubmission.attempt_kind, response);
    } catch (error) {
      this.showFailure(error);
    } finally {
      this.inFlight = false;
      this.refreshGating();
    }
  }

  /** Enrollment submits whatever the profile still needs (20 on a fresh
   * run); verification submits a single frame. */
  private async captureFrames(
    kind: "enroll" | "verify",
    userId: string,
  ): Promise<string[]> {
    if (this.cameraDenied || !this.camera) return [];
    let wanted = VERIFY_FRAMES;
    if (kind === "enroll") {
      const status = await getUserStatus(this.baseUrl, userId);
      wanted = Math.max(
        0,
        Math.min(ENROLL_FRAMES, status.face_images_required - status.face_images),
      );
    }
    const frames: string[] = [];
    for (let i = 0; i < wanted; i++) {
      frames.push(this.grabFrame());
      if (i + 1 < wanted) await sleep(FRAME_INTERVAL_MS);
    }
    return frames;
  }

  private grabFrame(): string {
    const video = this.els.video;
    const canvas = document.createElement("canvas");
    canvas.width = video.videoWidth;
    canvas.height = video.videoHeight;
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    ctx.drawImage(video, 0, 0);
    const rgba = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
    const gray = rgbaToGray(rgba, canvas.width, canvas.height);
    return frameToPayload(gray, canvas.width, canvas.height, this.guideBox());
  }

  /** The on-screen guide box translated into video pixel coordinates. */
  private guideBox(): CropBox {
    const video = this.els.video;
    const guide = this.els.guide.getBoundingClientRect();
    const shown = video.getBoundingClientRect();
    const scaleX = video.videoWidth / shown.width;
    const scaleY = video.videoHeight / shown.height;
    const size = Math.max(FACE_SIZE, Math.round(guide.width * Math.min(scaleX, scaleY)));
    const x = Math.round((guide.left - shown.left) * scaleX);
    const y = Math.round((guide.top - shown.top) * scaleY);
    return {
      x: Math.min(Math.max(0, x), video.videoWidth - size),
      y: Math.min(Math.max(0, y), video.videoHeight - size),
      size,
    };
  }

  private showDecision(
    kind: "enroll" | "verify",
    response: EnrollResponse | VerifyResponse,
  ): void {
    const el = this.els.outcome;
    this.els.retryButton.hidden = true;
    if (kind === "verify") {
      const verdict = response as VerifyResponse;
      const accepted = verdict.decision === "accept";
      el.className = accepted ? "outcome accept" : "outcome reject";
      el.textContent =
        `${verdict.decision.toUpperCase()} — genuine ${verdict.s_true.toFixed(4)} ` +
        `vs imposter ${verdict.s_false.toFixed(4)}`;
    } else {
      const enrolled = response as EnrollResponse;
      el.className = "outcome neutral";
      el.textContent = enrolled.trained
        ? "Profile trained — you can verify now."
        : "Sample recorded.";
    }
    this.showMessage("");
  }

  private showFailure(error: unknown): void {
    if (error instanceof ApiError) {
      if (error.status === 404) {
        this.showMessage("Unknown user — enroll first.");
      } else {
        this.showMessage(`Rejected by the service: ${error.message}`);
      }
      return;
    }
    this.els.retryButton.hidden = false;
    this.showMessage("Network failure — the same capture can be retried.");
  }

  private async refreshProgress(): Promise<void> {
    const userId = this.els.userId.value.trim();
    if (!userId) return;
    try {
      const status = await getUserStatus(this.baseUrl, userId);
      const { keystrokeProgress, faceProgress, progressText } = this.els;
      keystrokeProgress.max = status.keystroke_samples_required;
      keystrokeProgress.value = Math.min(
        status.keystroke_samples,
        status.keystroke_samples_required,
      );
      faceProgress.max = Math.max(1, status.face_images_required);
      faceProgress.value = Math.min(status.face_images, faceProgress.max);
      progressText.textContent =
        `${status.keystroke_samples} of ${status.keystroke_samples_required} typing samples, ` +
        `${status.face_images} of ${status.face_images_required} face images` +
        (status.trained ? " — trained" : "");
    } catch {
      // progress display is best-effort; submission flow already reported errors
    }
  }

  private showMessage(text: string): void {
    this.els.message.textContent = text;
  }
}

async function hashPassword(password: string): Promise<string> {
  const digest = await crypto.subtle.digest(
    "SHA-256",
    new TextEncoder().encode(password),
  );
  return [...new Uint8Array(digest)]
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export function boot(): void {
  const baseUrl = (window as { KEYFACE_SERVICE_URL?: string }).KEYFACE_SERVICE_URL ?? "";
  void new CapturePage(baseUrl, grabElements()).start();
}

if (typeof document !== "undefined" && document.getElementById("password")) {
  boot();
}
