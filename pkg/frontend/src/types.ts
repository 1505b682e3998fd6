/** Wire types for the verification service (all times integer milliseconds). */

export interface WireKeyEvent {
  key_label: string;
  press_ms: number;
  release_ms: number;
}

export interface CaptureSubmission {
  user_id: string;
  attempt_kind: "enroll" | "verify";
  key_events: WireKeyEvent[];
  face_frames: string[]; // base64 binary PGM, 64x64, maxval 255
  password_length?: number;
  password_hash?: string; // hex SHA-256; the text itself never leaves the page
  timer_granularity_ms?: number;
}

export interface EnrollResponse {
  status: string;
  user_id: string;
  keystroke_samples: number;
  face_images: number;
  trained: boolean;
  capture_quality: CaptureQuality;
}

export interface VerifyResponse {
  decision: "accept" | "reject";
  s_true: number;
  s_false: number;
  keystroke_score: number;
  face_distance: number | null;
  integrator: string | null;
  capture_quality: CaptureQuality;
}

export interface CaptureQuality {
  negative_latencies: number;
  timer_granularity_ms: number | null;
}

export interface UserStatus {
  user_id: string;
  keystroke_samples: number;
  face_images: number;
  keystroke_samples_required: number;
  face_images_required: number;
  trained: boolean;
}

export interface ErrorResponse {
  error: string;
}
