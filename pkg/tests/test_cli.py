import json
import subprocess
import sys

import numpy as np
import pytest

from keyface.cli import EXIT_ACCEPT, EXIT_ERROR, EXIT_REJECT, main
from keyface.hmm import score_sequence, TrainedProfile
from keyface.keystroke import (
    KeystrokeSample,
    RawKeyEvent,
    features_from_timings,
    parse_samples,
    serialize_samples,
)
from keyface.profile_store import ProfileStore

PASSPHRASE = "cli-test-passphrase"


@pytest.fixture()
def env(tmp_path, monkeypatch):
    monkeypatch.setenv("KEYFACE_PASSPHRASE", PASSPHRASE)
    return tmp_path


def make_sample(rng, n_keys=6, base_dur=80, base_gap=70, jitter=6):
    events = []
    press = 0
    for i in range(n_keys):
        duration = base_dur + int(rng.integers(-jitter, jitter + 1))
        events.append(RawKeyEvent(f"k{i}", press, press + duration))
        press = press + duration + base_gap + int(rng.integers(-jitter, jitter + 1))
    return KeystrokeSample(events=tuple(events), expected_text="x" * n_keys)


def write_samples(path, rng, n=10, **kwargs):
    samples = [make_sample(rng, **kwargs) for _ in range(n)]
    path.write_text(serialize_samples(samples), encoding="utf-8")
    return samples


def run(args):
    return main([str(a) for a in args])


def enroll(env, rng, user="alice", n=10):
    samples_path = env / "samples.txt"
    write_samples(samples_path, rng, n=n)
    code = run(
        ["--profiles-dir", env / "profiles", "enroll", user, "--samples", samples_path]
    )
    return code, samples_path


def test_enroll_writes_profile(env, capsys):
    rng = np.random.default_rng(0)
    code, _ = enroll(env, rng)
    assert code == EXIT_ACCEPT
    out = capsys.readouterr().out
    assert "log-likelihood trajectory" in out
    assert "score band" in out
    store = ProfileStore(env / "profiles")
    assert store.exists("alice", "hmm")
    assert store.exists("alice", "samples")
    profile = TrainedProfile.from_dict(
        json.loads(store.load_profile("alice", "hmm", PASSPHRASE))
    )
    assert profile.band_width_k == 1.0


def test_enroll_rejects_too_few_samples(env, capsys):
    rng = np.random.default_rng(1)
    samples_path = env / "samples.txt"
    write_samples(samples_path, rng, n=1)
    code = run(
        ["--profiles-dir", env / "profiles", "enroll", "alice", "--samples", samples_path]
    )
    assert code == EXIT_ERROR
    assert "minimum 10 samples" in capsys.readouterr().err


def test_verify_training_sample_accepts(env):
    rng = np.random.default_rng(2)
    code, samples_path = enroll(env, rng)
    assert code == EXIT_ACCEPT

    store = ProfileStore(env / "profiles")
    profile = TrainedProfile.from_dict(
        json.loads(store.load_profile("alice", "hmm", PASSPHRASE))
    )
    timings = parse_samples(samples_path.read_text())
    scores = [
        score_sequence(profile.model, features_from_timings(d, l)) for d, l in timings
    ]
    best = int(np.argmin(np.abs(np.array(scores) - profile.score_mean)))
    attempt = env / "attempt.txt"
    lines = samples_path.read_text().splitlines()
    attempt.write_text(lines[best] + "\n")

    code = run(
        ["--profiles-dir", env / "profiles", "verify", "alice", "--sample", attempt]
    )
    assert code == EXIT_ACCEPT


def test_verify_foreign_rhythm_rejects(env):
    rng = np.random.default_rng(3)
    code, _ = enroll(env, rng)
    assert code == EXIT_ACCEPT
    foreign = env / "foreign.txt"
    # a radically different rhythm: long holds, overlapping presses
    write_samples(foreign, rng, n=1, base_dur=220, base_gap=-40, jitter=3)
    code = run(
        ["--profiles-dir", env / "profiles", "verify", "alice", "--sample", foreign]
    )
    assert code == EXIT_REJECT


def test_verify_unknown_user_errors(env, capsys):
    rng = np.random.default_rng(4)
    attempt = env / "attempt.txt"
    write_samples(attempt, rng, n=1)
    code = run(
        ["--profiles-dir", env / "profiles", "verify", "nobody", "--sample", attempt]
    )
    assert code == EXIT_ERROR
    assert "no profile" in capsys.readouterr().err


def test_missing_passphrase_is_operational_error(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("KEYFACE_PASSPHRASE", raising=False)
    rng = np.random.default_rng(5)
    samples_path = tmp_path / "samples.txt"
    write_samples(samples_path, rng)
    code = run(
        ["--profiles-dir", tmp_path, "enroll", "alice", "--samples", samples_path]
    )
    assert code == EXIT_ERROR
    assert "passphrase" in capsys.readouterr().err


def test_evaluate_emits_json_lines(capsys):
    code = run(
        [
            "evaluate",
            "--users", 3,
            "--samples-per-user", 8,
            "--genuine-per-user", 4,
            "--imposter-per-user", 4,
            "--seed", 5,
            "--k", "0.5,1,2",
        ]
    )
    assert code == EXIT_ACCEPT
    captured = capsys.readouterr()
    lines = [line for line in captured.out.split("\n") if line]
    assert len(lines) == 3
    ks = []
    for line in lines:
        record = json.loads(line)
        assert set(record) == {"k", "far", "frr"}
        ks.append(record["k"])
    assert ks == [0.5, 1.0, 2.0]
    assert "EER" in captured.err


def test_config_file_overrides(env, capsys):
    rng = np.random.default_rng(6)
    config_path = env / "keyface.conf"
    config_path.write_text(
        "# test config\nmin_keystroke_samples = 2\niterations = 5\n"
    )
    samples_path = env / "samples.txt"
    write_samples(samples_path, rng, n=2)
    code = run(
        [
            "--config", config_path,
            "--profiles-dir", env / "profiles",
            "enroll", "carol", "--samples", samples_path,
        ]
    )
    assert code == EXIT_ACCEPT


def test_bad_integrator_flag_is_usage_error(env):
    with pytest.raises(SystemExit) as exc:
        run(["verify", "alice", "--sample", "x", "--integrator", "mean"])
    assert exc.value.code == EXIT_ERROR


def test_console_entry_point():
    result = subprocess.run(
        [sys.executable, "-m", "keyface", "--help"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert result.returncode == 0
    for subcommand in ("enroll", "verify", "evaluate", "serve"):
        assert subcommand in result.stdout
