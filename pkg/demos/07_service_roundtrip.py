"""End-to-end enrollment and verification over the HTTP API.

Starts the service in-process on a free port, enrolls a user with typed
samples and webcam-style face frames, polls enrollment progress, then
verifies a fresh attempt and prints the fused decision.
"""

import base64
import json
import tempfile
import threading
import urllib.request
from pathlib import Path

import numpy as np

from keyface.config import ServiceConfig
from keyface.face import FaceImage, IMAGE_SIZE, write_pgm
from keyface.service import create_server

rng = np.random.default_rng(1)


def typing_events(n_keys=6):
    events, press = [], 0
    for i in range(n_keys):
        duration = 80 + int(rng.integers(-6, 7))
        events.append(
            {"key_label": f"k{i}", "press_ms": press, "release_ms": press + duration}
        )
        press = press + duration + 70 + int(rng.integers(-6, 7))
    return events


def face_frame(base):
    jitter = rng.normal(0, 10, (IMAGE_SIZE, IMAGE_SIZE))
    image = FaceImage(pixels=np.clip(base + jitter, 0, 255).astype(np.uint8))
    return base64.b64encode(write_pgm(image)).decode()


def call(url, body=None):
    req = urllib.request.Request(
        url,
        data=json.dumps(body).encode() if body is not None else None,
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


with tempfile.TemporaryDirectory() as tmp:
    config = ServiceConfig(
        profiles_dir=Path(tmp) / "profiles",
        min_keystroke_samples=3,
        min_face_images=4,
        iterations=10,
    )
    server = create_server(config, passphrase="demo-passphrase", host="127.0.0.1", port=0)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base_url = f"http://127.0.0.1:{server.server_address[1]}"
    print("service:", call(f"{base_url}/healthz"))

    faces = {"maria": None, "nikola": None}
    for user in faces:
        faces[user] = rng.integers(40, 216, (IMAGE_SIZE, IMAGE_SIZE)).astype(float)
        print(f"\nenrolling {user}:")
        for _ in range(3):
            response = call(
                f"{base_url}/api/v1/submissions",
                {
                    "user_id": user,
                    "attempt_kind": "enroll",
                    "key_events": typing_events(),
                    "face_frames": [face_frame(faces[user]) for _ in range(2)],
                    "timer_granularity_ms": 1.0,
                },
            )
            print(f"  samples={response['keystroke_samples']} "
                  f"faces={response['face_images']} trained={response['trained']}")

    progress = call(f"{base_url}/api/v1/users/maria")
    print("\nstatus for maria:", progress)

    print("\nverifying maria (genuine attempt):")
    verdict = call(
        f"{base_url}/api/v1/submissions",
        {
            "user_id": "maria",
            "attempt_kind": "verify",
            "key_events": typing_events(),
            "face_frames": [face_frame(faces["maria"])],
        },
    )
    print(json.dumps(verdict, indent=2))

    print("verifying maria with nikola's face (imposter frame):")
    verdict = call(
        f"{base_url}/api/v1/submissions",
        {
            "user_id": "maria",
            "attempt_kind": "verify",
            "key_events": typing_events(),
            "face_frames": [face_frame(faces["nikola"])],
        },
    )
    print(f"  decision={verdict['decision']} s_true={verdict['s_true']:.4f} "
          f"s_false={verdict['s_false']:.4f}")

    server.shutdown()
    server.server_close()
