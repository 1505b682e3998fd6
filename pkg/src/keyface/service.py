"""Enrollment/verification HTTP service.

Endpoints (JSON in, JSON out, all integers in milliseconds):

    POST /api/v1/submissions   enroll or verify one capture
    GET  /api/v1/users/{id}    enrollment progress, never biometric data
    GET  /healthz              liveness probe

Client clocks are untrusted: only intra-sample time differences are used,
so clock offset is irrelevant; submissions spanning more than the
configured maximum are rejected as stale. The service never echoes raw
timings or images back to any client; responses carry derived scores and
capture-quality counters only. Verification is stateless per request;
enrollment mutates the store under a per-user lock.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import os
import struct
import threading
import urllib.parse
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import face as face_mod
from . import fusion
from .config import ServiceConfig
from .hmm import TrainedProfile, TrainingConfig, fit_profile, verify_keystroke
from .keystroke import (
    FeatureSequence,
    InvalidSampleError,
    KeystrokeSample,
    RawKeyEvent,
    features_from_timings,
    normalize,
    parse_samples,
    serialize_samples,
)
from .profile_store import ProfileStore

__all__ = [
    "CaptureSubmission",
    "SubmissionError",
    "VerificationService",
    "KeyfaceServer",
    "create_server",
    "pack_frames",
    "unpack_frames",
]

log = logging.getLogger(__name__)

FACE_MODEL_ID = "_global"


class SubmissionError(Exception):
    """Request rejected; carries the HTTP status to report."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass(frozen=True)
class CaptureSubmission:
    """One validated enrollment or verification capture."""

    user_id: str
    attempt_kind: str  # "enroll" | "verify"
    key_events: tuple[RawKeyEvent, ...]
    face_frames: tuple[bytes, ...]
    password_length: int | None = None
    timer_granularity_ms: float | None = None


def _require(condition: bool, message: str, status: int = 400) -> None:
    if not condition:
        raise SubmissionError(status, message)


def _is_int(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class VerificationService:
    """HTTP-agnostic core: validates submissions, talks to the profile store."""

    def __init__(self, config: ServiceConfig, passphrase: str):
        if not passphrase:
            raise ValueError("service passphrase must be non-empty")
        self.config = config
        self.passphrase = passphrase
        self.store = ProfileStore(config.profiles_dir)
        self._profiles: dict[str, TrainedProfile] = {}
        self._face_model: face_mod.FaceModel | None = None
        self._face_model_loaded = False
        self._cache_lock = threading.Lock()

    # ------------------------------------------------------------------ API

    def submit(self, body: object) -> tuple[int, dict]:
        """Handle POST /api/v1/submissions; returns (status, response body)."""
        try:
            sub = self._parse_submission(body)
            if sub.attempt_kind == "enroll":
                return 200, self._enroll(sub)
            return 200, self._verify(sub)
        except SubmissionError as exc:
            return exc.status, {"error": exc.message}

    def status(self, user_id: str) -> dict:
        """Handle GET /api/v1/users/{id}; unknown users report zero counts."""
        n_samples = len(self._load_sample_timings(user_id))
        n_faces = len(self._load_face_frames(user_id))
        return {
            "user_id": user_id,
            "keystroke_samples": n_samples,
            "face_images": n_faces,
            "keystroke_samples_required": self.config.min_keystroke_samples,
            "face_images_required": self.config.min_face_images,
            "trained": self._is_trained(user_id, n_faces),
        }

    # ------------------------------------------------------------ validation

    def _parse_submission(self, body: object) -> CaptureSubmission:
        _require(isinstance(body, dict), "body must be a JSON object")
        user_id = body.get("user_id")
        _require(isinstance(user_id, str) and bool(user_id), "user_id must be a non-empty string")
        _require(not user_id.startswith("_"), "user_id must not start with '_' (reserved)")
        kind = body.get("attempt_kind")
        _require(kind in ("enroll", "verify"), "attempt_kind must be 'enroll' or 'verify'")

        raw_events = body.get("key_events")
        _require(isinstance(raw_events, list) and len(raw_events) >= 2,
                 "key_events must be a list of at least 2 events")
        events = []
        prev_press = None
        for i, ev in enumerate(raw_events):
            _require(isinstance(ev, dict), f"key_events[{i}] must be an object")
            label = ev.get("key_label", "")
            press = ev.get("press_ms")
            release = ev.get("release_ms")
            _require(_is_int(press) and _is_int(release),
                     f"key_events[{i}]: press_ms and release_ms must be integers")
            _require(press >= 0 and release >= 0,
                     f"key_events[{i}]: timestamps must be non-negative")
            _require(release > press,
                     f"key_events[{i}]: release_ms must be greater than press_ms")
            _require(prev_press is None or press >= prev_press,
                     f"key_events[{i}]: events must be ordered by press_ms")
            prev_press = press
            events.append(RawKeyEvent(key_label=str(label), press_time=press,
                                      release_time=release))
        span = events[-1].release_time - events[0].press_time
        _require(span <= self.config.max_submission_ms,
                 f"submission spans {span} ms, exceeding the "
                 f"{self.config.max_submission_ms} ms staleness limit")

        password_length = body.get("password_length")
        if password_length is not None:
            _require(_is_int(password_length), "password_length must be an integer")
            _require(len(events) == password_length,
                     f"{len(events)} events for a {password_length}-character password")

        frames = []
        raw_frames = body.get("face_frames", [])
        _require(isinstance(raw_frames, list), "face_frames must be a list")
        for i, frame in enumerate(raw_frames):
            _require(isinstance(frame, str), f"face_frames[{i}] must be a base64 string")
            try:
                raw = base64.b64decode(frame, validate=True)
                img = face_mod.load_pgm(raw)
            except (binascii.Error, face_mod.FaceFormatError) as exc:
                raise SubmissionError(400, f"face_frames[{i}]: {exc}") from None
            frames.append(face_mod.write_pgm(img))  # canonical encoding

        granularity = body.get("timer_granularity_ms")
        if granularity is not None:
            _require(isinstance(granularity, (int, float)) and granularity >= 0,
                     "timer_granularity_ms must be a non-negative number")

        return CaptureSubmission(
            user_id=user_id,
            attempt_kind=kind,
            key_events=tuple(events),
            face_frames=tuple(frames),
            password_length=password_length,
            timer_granularity_ms=granularity,
        )

    # ------------------------------------------------------------ enrollment

    def _enroll(self, sub: CaptureSubmission) -> dict:
        sample = self._build_sample(sub)
        with self.store.user_lock(sub.user_id):
            if self.store.exists(sub.user_id, "hmm") and not self.config.allow_append:
                raise SubmissionError(
                    409, f"user {sub.user_id!r} is already trained; "
                         "appending requires allow_append")
            text = self._load_samples_text(sub.user_id) + serialize_samples([sample])
            self.store.save_profile(sub.user_id, "samples",
                                    text.encode("utf-8"), self.passphrase)
            frames = self._load_face_frames(sub.user_id) + list(sub.face_frames)
            if frames:
                self.store.save_profile(sub.user_id, "faces",
                                        pack_frames(frames), self.passphrase)
            n_samples = len(parse_samples(text))
            if n_samples >= self.config.min_keystroke_samples:
                self._train_user(sub.user_id, text)
        self._maybe_train_face_model()
        n_faces = len(frames)
        return {
            "status": "enrolled",
            "user_id": sub.user_id,
            "keystroke_samples": n_samples,
            "face_images": n_faces,
            "trained": self._is_trained(sub.user_id, n_faces),
            "capture_quality": self._capture_quality(sub, sample),
        }

    def _build_sample(self, sub: CaptureSubmission) -> KeystrokeSample:
        try:
            # The password text never crosses the wire; a placeholder of the
            # right length stands in for it.
            return KeystrokeSample(events=sub.key_events,
                                   expected_text="?" * len(sub.key_events))
        except InvalidSampleError as exc:
            raise SubmissionError(400, str(exc)) from None

    def _train_user(self, user_id: str, samples_text: str) -> None:
        sequences = [
            features_from_timings(d, l) for d, l in parse_samples(samples_text)
        ]
        profile = fit_profile(sequences, self._training_config())
        payload = json.dumps(profile.to_dict()).encode("utf-8")
        self.store.save_profile(user_id, "hmm", payload, self.passphrase)
        with self._cache_lock:
            self._profiles[user_id] = profile

    def _training_config(self) -> TrainingConfig:
        return TrainingConfig(
            iterations=self.config.iterations,
            covariance_floor=self.config.covariance_floor,
            seed=self.config.seed,
            band_width_k=self.config.band_k,
        )

    def _maybe_train_face_model(self) -> None:
        if self.config.min_face_images < 1:
            return
        by_label: dict[str, list[face_mod.FaceImage]] = {}
        for path in sorted(self.store.root.glob("*.faces.kbfp")):
            user_id = urllib.parse.unquote(path.name[: -len(".faces.kbfp")])
            frames = self._load_face_frames(user_id)
            if len(frames) >= self.config.min_face_images:
                by_label[user_id] = [face_mod.load_pgm(f) for f in frames]
        if len(by_label) < 2:
            return
        try:
            model = face_mod.train_face_model(by_label)
        except face_mod.FaceTrainingError as exc:
            log.warning("face model training skipped: %s", exc)
            return
        payload = json.dumps(model.to_dict()).encode("utf-8")
        self.store.save_profile(FACE_MODEL_ID, "face-model", payload, self.passphrase)
        with self._cache_lock:
            self._face_model = model
            self._face_model_loaded = True

    # ---------------------------------------------------------- verification

    def _verify(self, sub: CaptureSubmission) -> dict:
        profile = self._load_trained_profile(sub.user_id)
        if profile is None:
            raise SubmissionError(404, f"unknown user {sub.user_id!r}")
        sample = self._build_sample(sub)
        features = normalize(sample)

        face_model = self._load_face_model()
        face_enabled = (
            face_model is not None
            and sub.user_id in face_model.class_labels
            and self.config.min_face_images > 0
        )
        _require(not (face_enabled and not sub.face_frames),
                 "verification requires at least 1 face frame for this user")

        accepted_key, score, band_distance = verify_keystroke(profile, features)
        key_score = fusion.keystroke_match_score(band_distance)
        face_distance = None
        if face_enabled:
            image = face_mod.load_pgm(sub.face_frames[0])
            face_score = face_mod.face_match_score(face_model, image, sub.user_id)
            face_distance = face_mod.claimed_distance(face_model, image, sub.user_id)
            decision = fusion.integrate(key_score, face_score, self.config.integrator)
            accepted = decision.accepted
            s_true, s_false = decision.s_true, decision.s_false
        else:
            accepted = accepted_key
            s_true, s_false = key_score.p_true, key_score.p_false
        return {
            "decision": "accept" if accepted else "reject",
            "s_true": s_true,
            "s_false": s_false,
            "keystroke_score": score,
            "face_distance": face_distance,
            "integrator": self.config.integrator if face_enabled else None,
            "capture_quality": self._capture_quality(sub, sample),
        }

    # -------------------------------------------------------------- plumbing

    def _capture_quality(self, sub: CaptureSubmission, sample: KeystrokeSample) -> dict:
        latencies = [
            nxt.press_time - cur.release_time
            for cur, nxt in zip(sample.events, sample.events[1:])
        ]
        return {
            "negative_latencies": sum(1 for l in latencies if l < 0),
            "timer_granularity_ms": sub.timer_granularity_ms,
        }

    def _load_samples_text(self, user_id: str) -> str:
        if not self.store.exists(user_id, "samples"):
            return ""
        return self.store.load_profile(user_id, "samples", self.passphrase).decode("utf-8")

    def _load_sample_timings(self, user_id: str) -> list:
        text = self._load_samples_text(user_id)
        return parse_samples(text)

    def _load_face_frames(self, user_id: str) -> list[bytes]:
        if not self.store.exists(user_id, "faces"):
            return []
        return unpack_frames(self.store.load_profile(user_id, "faces", self.passphrase))

    def _load_trained_profile(self, user_id: str) -> TrainedProfile | None:
        with self._cache_lock:
            if user_id in self._profiles:
                return self._profiles[user_id]
        if not self.store.exists(user_id, "hmm"):
            return None
        payload = self.store.load_profile(user_id, "hmm", self.passphrase)
        profile = TrainedProfile.from_dict(json.loads(payload))
        with self._cache_lock:
            self._profiles[user_id] = profile
        return profile

    def _load_face_model(self) -> face_mod.FaceModel | None:
        with self._cache_lock:
            if self._face_model_loaded:
                return self._face_model
        model = None
        if self.store.exists(FACE_MODEL_ID, "face-model"):
            payload = self.store.load_profile(FACE_MODEL_ID, "face-model", self.passphrase)
            model = face_mod.FaceModel.from_dict(json.loads(payload))
        with self._cache_lock:
            self._face_model = model
            self._face_model_loaded = True
        return model

    def _is_trained(self, user_id: str, n_faces: int) -> bool:
        if not self.store.exists(user_id, "hmm"):
            return False
        if self.config.min_face_images > 0 and n_faces < self.config.min_face_images:
            return False
        return True


def pack_frames(frames: list[bytes]) -> bytes:
    return b"".join(struct.pack(">I", len(f)) + f for f in frames)


def unpack_frames(data: bytes) -> list[bytes]:
    frames = []
    pos = 0
    while pos < len(data):
        (length,) = struct.unpack_from(">I", data, pos)
        pos += 4
        frames.append(data[pos : pos + length])
        pos += length
    return frames


# ------------------------------------------------------------------- HTTP


class KeyfaceServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, service: VerificationService):
        super().__init__(address, _Handler)
        self.service = service


class _Handler(BaseHTTPRequestHandler):
    server: KeyfaceServer

    def do_GET(self) -> None:  # noqa: N802 (http.server naming)
        path = urllib.parse.urlparse(self.path).path
        if path == "/healthz":
            self._send_json(200, {"status": "ok"})
            return
        prefix = "/api/v1/users/"
        if path.startswith(prefix):
            user_id = urllib.parse.unquote(path[len(prefix):])
            self._send_json(200, self.server.service.status(user_id))
            return
        self._send_json(404, {"error": "not found"})

    def do_POST(self) -> None:  # noqa: N802
        path = urllib.parse.urlparse(self.path).path
        if path != "/api/v1/submissions":
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length))
        except (ValueError, json.JSONDecodeError):
            self._send_json(400, {"error": "request body must be valid JSON"})
            return
        try:
            status, response = self.server.service.submit(body)
        except Exception:
            log.exception("submission failed")
            self._send_json(500, {"error": "internal error"})
            return
        self._send_json(status, response)

    def _send_json(self, status: int, obj: dict) -> None:
        payload = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, format: str, *args) -> None:  # quiet by default
        log.debug("%s - %s", self.address_string(), format % args)


def create_server(
    config: ServiceConfig,
    passphrase: str | None = None,
    host: str | None = None,
    port: int | None = None,
) -> KeyfaceServer:
    """Build a ready-to-serve HTTP server; port 0 picks a free port."""
    if passphrase is None:
        passphrase = os.environ.get(config.passphrase_env, "")
        if not passphrase:
            raise ValueError(
                f"no passphrase: set the {config.passphrase_env} environment variable"
            )
    service = VerificationService(config, passphrase)
    address = (host or config.host, config.port if port is None else port)
    return KeyfaceServer(address, service)
