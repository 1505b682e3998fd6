"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see one PASS/FAIL line
per criterion.
"""

import base64
import itertools
import json
import math
import threading
import time
import urllib.error
import urllib.request

import numpy as np
import pytest
import scipy.linalg

from keyface import evaluation
from keyface.cli import EXIT_ACCEPT, EXIT_ERROR, main as cli_main
from keyface.config import ServiceConfig
from keyface.face import FaceImage, IMAGE_SIZE, snapshot_pca, train_pca
from keyface.fusion import INTEGRATORS, ModalityScore, integrate
from keyface.hmm import (
    GaussianParams,
    HmmModel,
    TrainedProfile,
    TrainingConfig,
    _initial_model,
    baum_welch_train,
    em_step,
    forward_backward,
    sample_sequences,
    score_sequence,
    viterbi,
)
from keyface.keystroke import (
    KeystrokeSample,
    RawKeyEvent,
    compute_durations,
    compute_latencies,
    features_from_timings,
    normalize,
    parse_samples,
    serialize_samples,
)
from keyface.profile_store import MAGIC, ProfileAuthError, decrypt_profile, encrypt_profile
from keyface.service import create_server


def report(criterion, ok, detail=""):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}" + (f" | {detail}" if detail else ""))
    assert ok, f"{criterion}: {detail}"


# ---------------------------------------------------------------------------


def test_keystroke_equation_correctness():
    """Durations/latencies exact, normalization within 1e-12, telescoping 1e-9,
    over 1,000 random valid samples, in under 5 seconds."""
    rng = np.random.default_rng(100)
    start = time.monotonic()
    for _ in range(1000):
        n_keys = int(rng.integers(2, 13))
        events = []
        press = int(rng.integers(0, 100))
        for i in range(n_keys):
            duration = int(rng.integers(1, 400))
            events.append(RawKeyEvent(f"k{i}", press, press + duration))
            press = press + duration + int(rng.integers(-duration + 1, 500))
        sample = KeystrokeSample(events=tuple(events), expected_text="x" * n_keys)

        durations = compute_durations(sample)
        latencies = compute_latencies(sample)
        expected_durations = [e.release_time - e.press_time for e in events]
        expected_latencies = [
            events[i + 1].press_time - events[i].release_time
            for i in range(n_keys - 1)
        ]
        assert durations == expected_durations
        assert latencies == expected_latencies

        total = events[-1].release_time - events[0].press_time
        assert sum(durations) + sum(latencies) == total

        features = normalize(sample)
        for t, (dur, lat) in enumerate(features.observations):
            assert abs(dur - expected_durations[t] / total) <= 1e-12
            assert abs(lat - expected_latencies[t] / total) <= 1e-12
        assert abs(features.final_duration - expected_durations[-1] / total) <= 1e-12
        checksum = sum(d + l for d, l in features.observations) + features.final_duration
        assert abs(checksum - 1.0) <= 1e-9
    elapsed = time.monotonic() - start
    report(
        "keystroke duration/latency/normalization equations",
        elapsed < 5.0,
        f"1000 samples in {elapsed:.2f} s",
    )


# ---------------------------------------------------------------------------


def _oracle_density(x, mean, cov):
    a, b, c, d = cov[0][0], cov[0][1], cov[1][0], cov[1][1]
    det = a * d - b * c
    dx0, dx1 = x[0] - mean[0], x[1] - mean[1]
    quad = (d * dx0 * dx0 - (b + c) * dx0 * dx1 + a * dx1 * dx1) / det
    return math.exp(-0.5 * quad) / (2.0 * math.pi * math.sqrt(det))


def _oracle_path_prob(model, obs, path):
    prob = model.initial_probs[path[0]]
    for t in range(1, len(path)):
        prob *= model.transition[path[t - 1], path[t]]
    for t, s in enumerate(path):
        prob *= _oracle_density(obs[t], model.emissions[s].mean, model.emissions[s].covariance)
    return prob


def test_hmm_oracle_equivalence():
    """100 random 2-state models, sequences of length <= 6: forward matches
    exhaustive path-sum within 1e-8 relative; Viterbi matches exhaustive
    maximization (path exact, value 1e-8). Under 30 seconds."""
    rng = np.random.default_rng(200)
    start = time.monotonic()
    for trial in range(100):
        init = rng.random(2) + 0.05
        init /= init.sum()
        trans = rng.random((2, 2)) + 0.05
        trans /= trans.sum(axis=1, keepdims=True)
        emissions = []
        for _ in range(2):
            a = rng.normal(0, 1, (2, 2))
            emissions.append(
                GaussianParams(mean=rng.normal(0, 1, 2), covariance=a @ a.T + 0.2 * np.eye(2))
            )
        model = HmmModel(initial_probs=init, transition=trans, emissions=tuple(emissions))
        T = 1 + trial % 6
        obs = rng.normal(0, 1.5, (T, 2))

        paths = list(itertools.product(range(2), repeat=T))
        probs = [_oracle_path_prob(model, obs, p) for p in paths]
        brute_loglik = math.log(sum(probs))
        best = int(np.argmax(probs))

        loglik, posteriors = forward_backward(model, obs)
        assert abs(loglik - brute_loglik) <= 1e-8 * abs(brute_loglik)
        assert np.max(np.abs(posteriors.sum(axis=1) - 1.0)) <= 1e-9

        path, log_joint = viterbi(model, obs)
        assert path.tolist() == list(paths[best])
        assert abs(log_joint - math.log(probs[best])) <= 1e-8 * abs(math.log(probs[best]))
    elapsed = time.monotonic() - start
    report(
        "HMM forward/Viterbi brute-force oracle equivalence",
        elapsed < 30.0,
        f"100 models in {elapsed:.2f} s",
    )


# ---------------------------------------------------------------------------


def test_baum_welch_monotonicity_and_stochasticity():
    """50 pinned-seed runs x 20 iterations: log-likelihood never drops by more
    than 1e-9; stochasticity invariants hold after every iteration."""
    master = np.random.default_rng(300)
    worst_drop = 0.0
    for run in range(50):
        center = master.uniform([0.05, 0.0], [0.12, 0.08])
        delta = master.uniform(0.01, 0.03, 2)
        gen = HmmModel(
            initial_probs=np.array([0.5, 0.5]),
            transition=np.array([[0.7, 0.3], [0.4, 0.6]]),
            emissions=(
                GaussianParams(mean=center - delta, covariance=0.0002 * np.eye(2)),
                GaussianParams(mean=center + delta, covariance=0.0002 * np.eye(2)),
            ),
        )
        samples = sample_sequences(gen, 10, 9, master)
        arrs = [np.asarray(s) for s in samples]
        config = TrainingConfig(iterations=20, seed=run)
        model = _initial_model(arrs, config)
        last_ll = -np.inf
        for _ in range(20):
            model, ll = em_step(model, arrs, config.covariance_floor)
            if last_ll != -np.inf:
                worst_drop = max(worst_drop, last_ll - ll)
            assert ll >= last_ll - 1e-9
            last_ll = ll
            assert abs(model.initial_probs.sum() - 1.0) <= 1e-9
            assert np.all(model.initial_probs >= 0)
            assert np.max(np.abs(model.transition.sum(axis=1) - 1.0)) <= 1e-9
            assert np.all(model.transition >= 0)
    report(
        "Baum-Welch monotonicity + stochasticity (50 runs x 20 iterations)",
        True,
        f"worst inter-iteration drop {worst_drop:.3e}",
    )


# ---------------------------------------------------------------------------


def test_parameter_recovery():
    """200 sequences of length 9 from a known model: emission means recovered
    within 0.05 up to state permutation (pinned seed)."""
    rng = np.random.default_rng(1234)
    means = np.array([[0.2, 0.3], [0.7, 0.6]])
    chol = np.linalg.cholesky(0.01 * np.eye(2))
    transition = np.array([[0.7, 0.3], [0.4, 0.6]])
    initial = np.array([0.6, 0.4])
    sequences = []
    for _ in range(200):
        seq = np.empty((9, 2))
        state = rng.choice(2, p=initial)
        for t in range(9):
            if t:
                state = rng.choice(2, p=transition[state])
            seq[t] = means[state] + chol @ rng.standard_normal(2)
        sequences.append(seq)
    model = baum_welch_train(sequences, TrainingConfig(iterations=20, seed=0))
    learned = np.stack([e.mean for e in model.emissions])
    error = min(
        np.abs(learned - means).max(), np.abs(learned[::-1] - means).max()
    )
    report("Baum-Welch parameter recovery", error < 0.05, f"max mean error {error:.4f}")


# ---------------------------------------------------------------------------


def test_eigenfaces_correctness():
    """Orthonormality within 1e-8; full-basis reconstruction within 1e-6
    relative; snapshot subspace equals direct eigendecomposition within 1e-6
    principal angle on 8x8 / N=5 instances."""
    rng = np.random.default_rng(400)

    images = [
        FaceImage(pixels=rng.integers(0, 256, (IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8))
        for _ in range(10)
    ]
    pca = train_pca(images, keep=9)
    gram = pca.components @ pca.components.T
    ortho_err = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    assert ortho_err <= 1e-8

    worst_reconstruction = 0.0
    for image in images:
        x = image.as_vector()
        coords = pca.components @ (x - pca.mean)
        rebuilt = pca.mean + pca.components.T @ coords
        worst_reconstruction = max(
            worst_reconstruction,
            float(np.linalg.norm(rebuilt - x) / np.linalg.norm(x)),
        )
    assert worst_reconstruction <= 1e-6

    worst_angle = 0.0
    for _ in range(5):
        data = rng.normal(0, 1, (5, 64))
        snap = snapshot_pca(data, keep=4)
        centered = data - data.mean(axis=0)
        eigvals, eigvecs = np.linalg.eigh(centered.T @ centered / 5)
        direct = eigvecs[:, np.argsort(eigvals)[::-1][:4]]
        angles = scipy.linalg.subspace_angles(snap.components.T, direct)
        worst_angle = max(worst_angle, float(np.max(angles)))
    assert worst_angle < 1e-6
    report(
        "Eigenfaces orthonormality / reconstruction / snapshot equivalence",
        True,
        f"ortho {ortho_err:.1e}, reconstruction {worst_reconstruction:.1e}, "
        f"angle {worst_angle:.1e}",
    )


# ---------------------------------------------------------------------------


def test_far_frr_reported_rates():
    """FAR/FRR arithmetic reproduces the reported operating point exactly:
    27/500 -> 5.4% and 46/500 -> 9.2%."""
    imposters = [
        evaluation.Attempt("alice", f"eve{i}", accepted=i < 27) for i in range(500)
    ]
    genuine = [
        evaluation.Attempt("alice", "alice", accepted=i >= 46) for i in range(500)
    ]
    log = imposters + genuine
    far_value = evaluation.far(log)
    frr_value = evaluation.frr(log)
    assert far_value == 27 / 500 == 0.054
    assert frr_value == 46 / 500 == 0.092
    report(
        "FAR/FRR arithmetic on the reported counts",
        True,
        f"FAR {far_value:.3f} (5.4%), FRR {frr_value:.3f} (9.2%)",
    )


# ---------------------------------------------------------------------------

# Regression values recorded on the pinned population (seed 12, attempts 13).
PINNED_EERS = {"keystroke": 0.05, "face": 0.055, "fused": 0.025}


def test_roc_monotonicity_and_fusion_benefit():
    """Pinned 20-user population: FRR non-increasing and FAR non-decreasing
    over k in {0.5, 1, 1.5, 2, 3}; product-fused EER <= each single-modality
    EER. Full sweep under 2 minutes."""
    start = time.monotonic()
    population = evaluation.generate_population(20, 30, seed=12, spread=1.0)
    enrolled = evaluation.enroll_population(population)
    attempts = evaluation.draw_attempts(population, 10, 10, seed=13)
    scored = evaluation.score_attempts(enrolled, attempts)

    points = evaluation.sweep_roc(scored, [0.5, 1.0, 1.5, 2.0, 3.0])
    for a, b in zip(points, points[1:]):
        assert b.frr <= a.frr + 1e-12, f"FRR rose from k={a.k} to k={b.k}"
        assert b.far >= a.far - 1e-12, f"FAR fell from k={a.k} to k={b.k}"

    eers = evaluation.modality_eers(scored, integrator="product")
    assert eers["fused"] <= eers["keystroke"] + 1e-12
    assert eers["fused"] <= eers["face"] + 1e-12
    for name, value in PINNED_EERS.items():
        assert eers[name] == pytest.approx(value, abs=1e-12), f"{name} EER drifted"
    elapsed = time.monotonic() - start
    report(
        "ROC monotonicity + fused EER benefit (pinned population)",
        elapsed < 120.0,
        f"EERs {eers}, sweep in {elapsed:.1f} s",
    )


# ---------------------------------------------------------------------------


def test_fusion_properties():
    """Commutativity, monotonicity, and both-agree dominance over 10,000
    random score pairs per integrator, in under 5 seconds."""
    rng = np.random.default_rng(500)
    start = time.monotonic()
    for integrator in INTEGRATORS:
        for _ in range(10_000):
            kt, kf, ft, ff = rng.random(4)
            key = ModalityScore(p_true=kt, p_false=kf, modality="keystroke")
            face = ModalityScore(p_true=ft, p_false=ff, modality="face")
            a = integrate(key, face, integrator)

            b = integrate(
                ModalityScore(p_true=ft, p_false=ff, modality="keystroke"),
                ModalityScore(p_true=kt, p_false=kf, modality="face"),
                integrator,
            )
            assert abs(a.s_true - b.s_true) <= 1e-12
            assert abs(a.s_false - b.s_false) <= 1e-12

            bumped = integrate(
                ModalityScore(
                    p_true=kt + (1 - kt) * rng.random(), p_false=kf, modality="keystroke"
                ),
                face,
                integrator,
            )
            if a.accepted:
                assert bumped.accepted

            if kt > kf and ft > ff and integrator == "product":
                assert a.accepted
            if kt < kf and ft < ff and integrator == "product":
                assert not a.accepted
    elapsed = time.monotonic() - start
    report(
        "fusion commutativity/monotonicity/dominance (4 x 10,000 pairs)",
        elapsed < 5.0,
        f"{elapsed:.2f} s",
    )


# ---------------------------------------------------------------------------


def test_profile_store_guarantees():
    """100 random payloads round-trip bit-exactly; every sampled single-bit
    ciphertext flip is detected; identical payloads encrypt differently."""
    rng = np.random.default_rng(600)
    passphrase = "acceptance-passphrase"
    for _ in range(100):
        payload = rng.bytes(int(rng.integers(0, 1500)))
        assert decrypt_profile(encrypt_profile(payload, passphrase), passphrase) == payload

    payload = rng.bytes(600)
    blob = encrypt_profile(payload, passphrase)
    header = len(MAGIC) + 1
    positions = set(rng.integers(header, len(blob), 30).tolist()) | {header, len(blob) - 1}
    flips = 0
    for pos in positions:
        for bit in range(8):
            corrupted = bytearray(blob)
            corrupted[pos] ^= 1 << bit
            with pytest.raises(ProfileAuthError):
                decrypt_profile(bytes(corrupted), passphrase)
            flips += 1

    assert encrypt_profile(payload, passphrase) != encrypt_profile(payload, passphrase)
    report(
        "profile store round-trip / tamper detection / ciphertext freshness",
        True,
        f"100 round trips, {flips} bit flips detected",
    )


# ---------------------------------------------------------------------------


def _typing_events(rng, n_keys=6):
    events = []
    press = 0
    for i in range(n_keys):
        duration = 80 + int(rng.integers(-6, 7))
        events.append(
            {"key_label": f"k{i}", "press_ms": press, "release_ms": press + duration}
        )
        press = press + duration + 70 + int(rng.integers(-6, 7))
    return events


def test_cli_service_contract(tmp_path, monkeypatch):
    """Enroll -> verify happy path exits 0; malformed event -> HTTP 400;
    unknown user -> 404 / exit 2; replayed submission -> identical decision."""
    monkeypatch.setenv("KEYFACE_PASSPHRASE", "contract-test")
    rng = np.random.default_rng(700)

    # --- CLI: enroll then verify a training sample (exit 0)
    samples = []
    for _ in range(10):
        events = tuple(
            RawKeyEvent(e["key_label"], e["press_ms"], e["release_ms"])
            for e in _typing_events(rng)
        )
        samples.append(KeystrokeSample(events=events, expected_text="x" * 6))
    samples_path = tmp_path / "samples.txt"
    samples_path.write_text(serialize_samples(samples))
    profiles_dir = tmp_path / "profiles"

    code = cli_main(
        ["--profiles-dir", str(profiles_dir), "enroll", "alice",
         "--samples", str(samples_path)]
    )
    assert code == EXIT_ACCEPT

    from keyface.profile_store import ProfileStore

    store = ProfileStore(profiles_dir)
    profile = TrainedProfile.from_dict(
        json.loads(store.load_profile("alice", "hmm", "contract-test"))
    )
    timings = parse_samples(samples_path.read_text())
    scores = [
        score_sequence(profile.model, features_from_timings(d, l)) for d, l in timings
    ]
    best = int(np.argmin(np.abs(np.array(scores) - profile.score_mean)))
    attempt_path = tmp_path / "attempt.txt"
    attempt_path.write_text(samples_path.read_text().splitlines()[best] + "\n")
    code = cli_main(
        ["--profiles-dir", str(profiles_dir), "verify", "alice",
         "--sample", str(attempt_path)]
    )
    assert code == EXIT_ACCEPT

    code = cli_main(
        ["--profiles-dir", str(profiles_dir), "verify", "mallory",
         "--sample", str(attempt_path)]
    )
    assert code == EXIT_ERROR

    # --- HTTP service on the same store
    config = ServiceConfig(
        profiles_dir=profiles_dir, min_keystroke_samples=3, min_face_images=0,
        iterations=5,
    )
    server = create_server(config, passphrase="contract-test", host="127.0.0.1", port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"

    def call(body):
        req = urllib.request.Request(
            f"{base}/api/v1/submissions",
            data=json.dumps(body).encode(),
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(req) as resp:
                return resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read())

    try:
        bad = _typing_events(rng)
        bad[1]["release_ms"] = bad[1]["press_ms"] - 5
        status, _ = call({"user_id": "alice", "attempt_kind": "verify", "key_events": bad})
        assert status == 400

        status, _ = call(
            {"user_id": "ghost", "attempt_kind": "verify",
             "key_events": _typing_events(rng)}
        )
        assert status == 404

        best_line = parse_samples(attempt_path.read_text())[0]
        durations, latencies = best_line
        events, press = [], 0
        for i, d in enumerate(durations):
            events.append(
                {"key_label": f"k{i}", "press_ms": press, "release_ms": press + d}
            )
            press = press + d + (latencies[i] if i < len(latencies) else 0)
        submission = {"user_id": "alice", "attempt_kind": "verify", "key_events": events}
        status1, first = call(submission)
        status2, second = call(submission)
        assert status1 == status2 == 200
        assert first == second
        assert first["decision"] == "accept"
    finally:
        server.shutdown()
        server.server_close()

    report(
        "CLI/service contract (exit codes, 400, 404, replay determinism)",
        True,
        f"decision {first['decision']}",
    )
