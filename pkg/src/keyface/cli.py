"""Command-line front end: enroll, verify, evaluate, serve.

Exit codes are a stable contract: 0 = accepted, 1 = rejected,
2 = operational error (missing profile, bad input, usage error).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.parse
from pathlib import Path

from . import evaluation, face as face_mod, fusion
from .config import ConfigError, ServiceConfig, load_config
from .hmm import (
    TrainedProfile,
    TrainingConfig,
    train_with_history,
    score_sequence,
    verify_keystroke,
)
from .keystroke import (
    InvalidSampleError,
    SampleFormatError,
    features_from_timings,
    parse_samples,
)
from .profile_store import ProfileStore
from .service import FACE_MODEL_ID, create_server, pack_frames, unpack_frames

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_ERROR = 2


class CliError(Exception):
    """Operational failure; message goes to stderr, exit code 2."""


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InvalidSampleError, SampleFormatError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keyface",
        description="Keystroke-dynamics + face user verification",
    )
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument("--profiles-dir", type=Path, help="profile store directory")
    parser.add_argument(
        "--passphrase-env",
        help="environment variable holding the store passphrase",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enroll", help="train a user profile from recorded samples")
    p.add_argument("user_id")
    p.add_argument("--samples", type=Path, required=True,
                   help="plaintext keystroke sample file (one line per attempt)")
    p.add_argument("--faces", type=Path, nargs="*", default=[],
                   help="pre-cropped 64x64 PGM images for this user")
    p.add_argument("--band-k", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--min-samples", type=int, default=None)
    p.set_defaults(handler=_cmd_enroll)

    p = sub.add_parser("verify", help="verify one attempt against a stored profile")
    p.add_argument("user_id")
    p.add_argument("--sample", type=Path, required=True,
                   help="sample file; the first line is the attempt to verify")
    p.add_argument("--image", type=Path, help="64x64 PGM probe image")
    p.add_argument("--integrator", choices=fusion.INTEGRATORS, default=None)
    p.add_argument("--band-k", type=float, default=None)
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("evaluate", help="FAR/FRR sweep on a synthetic population")
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--samples-per-user", type=int, default=30)
    p.add_argument("--genuine-per-user", type=int, default=10)
    p.add_argument("--imposter-per-user", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--k", default="0.5,1,1.5,2,3",
                   help="comma-separated band widths to sweep")
    p.add_argument("--integrator", choices=fusion.INTEGRATORS, default="product")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the enrollment/verification HTTP service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--allow-append", action="store_true", default=None,
                   help="let enrollment submissions extend an already-trained profile")
    p.set_defaults(handler=_cmd_serve)
    return parser


def _load_service_config(args: argparse.Namespace) -> ServiceConfig:
    config = load_config(args.config) if args.config else ServiceConfig()
    if args.profiles_dir is not None:
        config.profiles_dir = args.profiles_dir
    if args.passphrase_env is not None:
        config.passphrase_env = args.passphrase_env
    return config


def _passphrase(config: ServiceConfig) -> str:
    passphrase = os.environ.get(config.passphrase_env, "")
    if not passphrase:
        raise CliError(
            f"no passphrase: set the {config.passphrase_env} environment variable"
        )
    return passphrase


def _read_feature_sequences(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError(f"sample file not found: {path}") from None
    timings = parse_samples(text)
    if not timings:
        raise CliError(f"no samples in {path}")
    return [features_from_timings(d, l) for d, l in timings]


def _cmd_enroll(args: argparse.Namespace) -> int:
    config = _load_service_config(args)
    passphrase = _passphrase(config)
    store = ProfileStore(config.profiles_dir)

    sequences = _read_feature_sequences(args.samples)
    minimum = args.min_samples if args.min_samples is not None else config.min_keystroke_samples
    if len(sequences) < minimum:
        raise CliError(
            f"minimum {minimum} samples required, got {len(sequences)}"
        )

    training = TrainingConfig(
        iterations=args.iterations if args.iterations is not None else config.iterations,
        covariance_floor=config.covariance_floor,
        seed=args.seed if args.seed is not None else config.seed,
        band_width_k=args.band_k if args.band_k is not None else config.band_k,
    )
    model, history = train_with_history(sequences, training)
    scores = [score_sequence(model, s) for s in sequences]
    mean = sum(scores) / len(scores)
    std = (sum((s - mean) ** 2 for s in scores) / len(scores)) ** 0.5
    profile = TrainedProfile(model=model, score_mean=mean, score_std=std,
                             band_width_k=training.band_width_k)

    store.save_profile(args.user_id, "samples",
                       args.samples.read_bytes(), passphrase)
    store.save_profile(args.user_id, "hmm",
                       json.dumps(profile.to_dict()).encode("utf-8"), passphrase)

    print("training log-likelihood trajectory:")
    for i, ll in enumerate(history):
        print(f"  iteration {i:2d}: {ll:.6f}")
    print(f"score band: mean={mean:.6f} std={std:.6f} k={training.band_width_k}")

    if args.faces:
        images = []
        for face_path in args.faces:
            images.append(face_mod.load_pgm(Path(face_path).read_bytes()))
        if len(images) < config.min_face_images:
            raise CliError(
                f"minimum {config.min_face_images} face images required, got {len(images)}"
            )
        store.save_profile(args.user_id, "faces",
                           pack_frames([face_mod.write_pgm(i) for i in images]),
                           passphrase)
        _retrain_face_model(store, passphrase, config)
        print(f"stored {len(images)} face images")
    print(f"profile for {args.user_id!r} written to {config.profiles_dir}")
    return EXIT_ACCEPT


def _retrain_face_model(store: ProfileStore, passphrase: str,
                        config: ServiceConfig) -> None:
    by_label: dict[str, list] = {}
    for path in sorted(store.root.glob("*.faces.kbfp")):
        user_id = urllib.parse.unquote(path.name[: -len(".faces.kbfp")])
        frames = unpack_frames(store.load_profile(user_id, "faces", passphrase))
        if len(frames) >= config.min_face_images:
            by_label[user_id] = [face_mod.load_pgm(f) for f in frames]
    if len(by_label) < 2:
        print("face model pending: need at least 2 users with enough images")
        return
    model = face_mod.train_face_model(by_label)
    store.save_profile(FACE_MODEL_ID, "face-model",
                       json.dumps(model.to_dict()).encode("utf-8"), passphrase)
    print(f"face model trained over {len(by_label)} users")


def _cmd_verify(args: argparse.Namespace) -> int:
    config = _load_service_config(args)
    passphrase = _passphrase(config)
    store = ProfileStore(config.profiles_dir)
    if args.integrator is not None:
        config.integrator = args.integrator

    if not store.exists(args.user_id, "hmm"):
        raise CliError(f"no profile for user {args.user_id!r}")
    profile = TrainedProfile.from_dict(
        json.loads(store.load_profile(args.user_id, "hmm", passphrase))
    )
    if args.band_k is not None:
        profile = TrainedProfile(model=profile.model, score_mean=profile.score_mean,
                                 score_std=profile.score_std, band_width_k=args.band_k)

    features = _read_feature_sequences(args.sample)[0]
    accepted_key, score, band_distance = verify_keystroke(profile, features)
    key_score = fusion.keystroke_match_score(band_distance)
    print(f"keystroke: score={score:.6f} band_distance={band_distance:.4f} "
          f"p_true={key_score.p_true:.4f}")

    face_model = None
    if store.exists(FACE_MODEL_ID, "face-model"):
        face_model = face_mod.FaceModel.from_dict(
            json.loads(store.load_profile(FACE_MODEL_ID, "face-model", passphrase))
        )
    if args.image is not None and face_model is not None:
        image = face_mod.load_pgm(args.image.read_bytes())
        try:
            face_score = face_mod.face_match_score(face_model, image, args.user_id)
        except face_mod.UnknownLabelError:
            raise CliError(
                f"user {args.user_id!r} is not enrolled in the face model"
            ) from None
        distance = face_mod.claimed_distance(face_model, image, args.user_id)
        decision = fusion.integrate(key_score, face_score, config.integrator)
        print(f"face: distance={distance:.6f} p_true={face_score.p_true:.4f}")
        print(f"fused ({config.integrator}): s_true={decision.s_true:.6f} "
              f"s_false={decision.s_false:.6f}")
        accepted = decision.accepted
    else:
        if args.image is not None and face_model is None:
            print("no face model available; deciding on keystroke alone")
        accepted = accepted_key
    print("decision: ACCEPT" if accepted else "decision: REJECT")
    return EXIT_ACCEPT if accepted else EXIT_REJECT


def _cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        k_values = [float(part) for part in str(args.k).split(",") if part]
    except ValueError:
        raise CliError(f"bad k list {args.k!r}") from None
    if not k_values:
        raise CliError("at least one band width is required")
    population = evaluation.generate_population(
        args.users, args.samples_per_user, seed=args.seed, spread=args.spread
    )
    enrolled = evaluation.enroll_population(population)
    attempts = evaluation.draw_attempts(
        population, args.genuine_per_user, args.imposter_per_user, seed=args.seed + 1
    )
    scored = evaluation.score_attempts(enrolled, attempts)
    points = evaluation.sweep_roc(scored, k_values)
    sys.stdout.write(evaluation.format_report(points))
    eers = evaluation.modality_eers(scored, args.integrator)
    n_genuine = sum(a.is_genuine for a in scored)
    print(
        f"attempts: {n_genuine} genuine / {len(scored) - n_genuine} imposter; "
        f"EER keystroke={eers['keystroke']:.4f} face={eers['face']:.4f} "
        f"fused({args.integrator})={eers['fused']:.4f}",
        file=sys.stderr,
    )
    return EXIT_ACCEPT


def _cmd_serve(args: argparse.Namespace) -> int:
    config = _load_service_config(args)
    if args.allow_append is not None:
        config.allow_append = args.allow_append
    passphrase = _passphrase(config)
    server = create_server(config, passphrase, host=args.host, port=args.port)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_ACCEPT


if __name__ == "__main__":
    sys.exit(main())
