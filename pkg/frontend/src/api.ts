/** Thin client for the verification service's HTTP API. */

import type {
  CaptureSubmission,
  EnrollResponse,
  ErrorResponse,
  UserStatus,
  VerifyResponse,
} from "./types";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function parseJson(response: Response): Promise<unknown> {
  try {
    return await response.json();
  } catch {
    throw new ApiError(response.status, "service returned a non-JSON body");
  }
}

export async function submitCapture(
  baseUrl: string,
  submission: CaptureSubmission,
): Promise<EnrollResponse | VerifyResponse> {
  const response = await fetch(`${baseUrl}/api/v1/submissions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(submission),
  });
  const body = await parseJson(response);
  if (!response.ok) {
    throw new ApiError(response.status, (body as ErrorResponse).error ?? "request failed");
  }
  return body as EnrollResponse | VerifyResponse;
}

export async function getUserStatus(
  baseUrl: string,
  userId: string,
): Promise<UserStatus> {
  const response = await fetch(
    `${baseUrl}/api/v1/users/${encodeURIComponent(userId)}`,
  );
  const body = await parseJson(response);
  if (!response.ok) {
    throw new ApiError(response.status, (body as ErrorResponse).error ?? "request failed");
  }
  return body as UserStatus;
}

export async function healthy(baseUrl: string): Promise<boolean> {
  try {
    const response = await fetch(`${baseUrl}/healthz`);
    return response.ok;
  } catch {
    return false;
  }
}
