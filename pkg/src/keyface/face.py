"""Eigenface/Fisherface matching over pre-cropped 64x64 grayscale images.

PCA runs via the snapshot method (the N x N Gram matrix instead of the
4096 x 4096 pixel covariance), LDA is solved on the PCA-projected data as
a generalized symmetric eigenproblem, and probes are classified to the
class whose Fisher-space mean is nearest in Euclidean distance. A
calibrated match score maps that distance to a probability-like value for
fusion.

Face detection, alignment, and illumination normalization are out of
scope; inputs must arrive already cropped to the fixed geometry.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .fusion import ModalityScore

__all__ = [
    "IMAGE_SIZE",
    "FaceFormatError",
    "FaceTrainingError",
    "DegenerateClassesError",
    "UnknownLabelError",
    "DegenerateBasisWarning",
    "FaceImage",
    "FaceModel",
    "PcaResult",
    "LdaResult",
    "load_pgm",
    "write_pgm",
    "snapshot_pca",
    "train_pca",
    "train_lda",
    "train_face_model",
    "project",
    "classify",
    "claimed_distance",
    "face_match_score",
]

IMAGE_SIZE = 64
_N_PIXELS = IMAGE_SIZE * IMAGE_SIZE
_EIGENVALUE_CUTOFF = 1e-10  # relative to the largest eigenvalue
_CALIBRATION_EPS = 1e-12


class FaceFormatError(ValueError):
    """Image bytes violate the PGM input contract."""


class FaceTrainingError(ValueError):
    """Training data cannot support the requested decomposition."""


class DegenerateClassesError(FaceTrainingError):
    """Between-class scatter vanished: the enrolled classes coincide."""


class UnknownLabelError(KeyError):
    """The claimed label is not enrolled in the model."""


class DegenerateBasisWarning(UserWarning):
    """All eigenvalues vanished; an empty basis was returned."""


@dataclass(frozen=True)
class FaceImage:
    """A 64x64 8-bit grayscale image, row-major."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim == 1 and px.size == _N_PIXELS:
            px = px.reshape(IMAGE_SIZE, IMAGE_SIZE)
        if px.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise FaceFormatError(
                f"expected {IMAGE_SIZE}x{IMAGE_SIZE} pixels, got shape {px.shape}"
            )
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.floor(px)):
                raise FaceFormatError("pixel intensities must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return IMAGE_SIZE

    @property
    def height(self) -> int:
        return IMAGE_SIZE

    def as_vector(self) -> np.ndarray:
        """Row-major float copy of shape (4096,)."""
        return self.pixels.astype(float).reshape(-1)


def load_pgm(data: bytes) -> FaceImage:
    """Parse a binary PGM (magic P5, maxval 255, 64x64) into a FaceImage."""
    magic, rest = _read_token(data, 0)
    if magic != "P5":
        raise FaceFormatError(f"unsupported magic {magic!r}, expected 'P5'")
    width, rest = _read_token(data, rest)
    height, rest = _read_token(data, rest)
    maxval, rest = _read_token(data, rest)
    try:
        w, h, mv = int(width), int(height), int(maxval)
    except ValueError:
        raise FaceFormatError("non-numeric PGM header field") from None
    if mv != 255:
        raise FaceFormatError(f"unsupported maxval {mv}, expected 255")
    if (w, h) != (IMAGE_SIZE, IMAGE_SIZE):
        raise FaceFormatError(
            f"unsupported dimensions {w}x{h}, expected {IMAGE_SIZE}x{IMAGE_SIZE}"
        )
    payload = data[rest:]
    if len(payload) != w * h:
        raise FaceFormatError(
            f"payload holds {len(payload)} bytes, expected {w * h}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return FaceImage(pixels=pixels)


def _read_token(data: bytes, pos: int) -> tuple[str, int]:
    """Next whitespace-delimited header token, skipping '#' comment lines."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        if data[pos : pos + 1] == b"#":
            break
        pos += 1
    if start == pos:
        raise FaceFormatError("truncated PGM header")
    # exactly one whitespace byte separates the header from the payload
    return data[start:pos].decode("ascii", errors="replace"), pos + 1


def write_pgm(image: FaceImage) -> bytes:
    """Binary PGM bytes that :func:`load_pgm` reads back pixel-exactly."""
    header = f"P5\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


class PcaResult(NamedTuple):
    mean: np.ndarray
    components: np.ndarray  # (k, d), rows orthonormal
    eigenvalues: np.ndarray  # (k,), descending


class LdaResult(NamedTuple):
    basis: np.ndarray  # (m, d), rows ordered by eigenvalue descending
    eigenvalues: np.ndarray


def snapshot_pca(data: np.ndarray, keep: int) -> PcaResult:
    """PCA of N vectors in d dimensions via the N x N Gram matrix.

    Intended for d >> N (face vectors). Eigenvalues are those of the
    covariance (1/N) X^T X of the mean-centered data, sorted descending;
    eigenvalues below 1e-10 of the largest are treated as zero, so at most
    ``rank`` components are returned even if ``keep`` asks for more.
    """
    data = np.asarray(data, dtype=float)
    n, d = data.shape
    if n < 2:
        raise FaceTrainingError(f"PCA needs at least 2 vectors, got {n}")
    if not 1 <= keep <= n - 1:
        raise FaceTrainingError(
            f"keep={keep} out of range; a centered set of {n} vectors has rank at most {n - 1}"
        )
    mean = data.mean(axis=0)
    centered = data - mean
    gram = centered @ centered.T / n
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    largest = eigvals[0] if eigvals.size else 0.0
    if largest <= 0.0:
        warnings.warn(
            "all eigenvalues are zero (identical training vectors); returning an empty basis",
            DegenerateBasisWarning,
            stacklevel=2,
        )
        return PcaResult(mean=mean, components=np.empty((0, d)), eigenvalues=np.empty(0))
    rank = int(np.sum(eigvals > _EIGENVALUE_CUTOFF * largest))
    m = min(keep, rank)
    components = centered.T @ eigvecs[:, :m]
    components /= np.linalg.norm(components, axis=0, keepdims=True)
    return PcaResult(mean=mean, components=components.T, eigenvalues=eigvals[:m].copy())


def train_pca(images: Sequence[FaceImage], keep: int) -> PcaResult:
    """Mean face, eigenfaces, and eigenvalues from training images."""
    data = np.stack([img.as_vector() for img in images])
    return snapshot_pca(data, keep)


def train_lda(projected: Mapping[str, np.ndarray]) -> LdaResult:
    """Fisher projection from per-class PCA-space vectors.

    Solves the generalized eigenproblem of between-class versus within-class
    scatter and returns at most C-1 basis vectors ordered by eigenvalue
    descending. The within-class scatter gets a small ridge so that nearly
    colinear classes stay solvable; a truly singular scatter (zero
    within-class variation) is reported with a hint to reduce the projection
    dimension first.
    """
    classes = {label: np.asarray(v, dtype=float) for label, v in projected.items()}
    if len(classes) < 2:
        raise FaceTrainingError(f"LDA needs at least 2 classes, got {len(classes)}")
    for label, v in classes.items():
        if v.ndim != 2:
            raise FaceTrainingError(f"class {label!r}: expected a 2-D array of vectors")
        if v.shape[0] < 2:
            raise FaceTrainingError(
                f"class {label!r} has {v.shape[0]} samples, need at least 2"
            )
    d = next(iter(classes.values())).shape[1]
    n_total = sum(v.shape[0] for v in classes.values())
    n_classes = len(classes)
    if d > n_total - n_classes:
        raise FaceTrainingError(
            f"projection dimension {d} exceeds N - C = {n_total - n_classes}; "
            "reduce the PCA dimension before LDA"
        )

    overall_mean = (
        sum(v.sum(axis=0) for v in classes.values()) / n_total
    )
    s_within = np.zeros((d, d))
    s_between = np.zeros((d, d))
    for v in classes.values():
        mu = v.mean(axis=0)
        dev = v - mu
        s_within += dev.T @ dev
        gap = mu - overall_mean
        s_between += v.shape[0] * np.outer(gap, gap)
    s_within = s_within + (1e-6 * np.trace(s_within) / d) * np.eye(d)

    try:
        eigvals, eigvecs = scipy.linalg.eigh(s_between, s_within)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise FaceTrainingError(
            "within-class scatter is singular; reduce the projection dimension"
        ) from None
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    largest = eigvals[0] if eigvals.size else 0.0
    if largest <= _EIGENVALUE_CUTOFF:
        raise DegenerateClassesError(
            "degenerate classes: between-class scatter is zero"
        )
    m = min(n_classes - 1, int(np.sum(eigvals > _EIGENVALUE_CUTOFF * largest)))
    return LdaResult(basis=eigvecs[:, :m].T.copy(), eigenvalues=eigvals[:m].copy())


@dataclass(frozen=True)
class FaceModel:
    """Trained projection pipeline plus per-class means and calibration stats."""

    mean_face: np.ndarray  # (4096,)
    eigenfaces: np.ndarray  # (k, 4096)
    fisher_basis: np.ndarray  # (m, k)
    class_labels: tuple[str, ...]
    class_means: np.ndarray  # (C, m)
    genuine_dist_mean: float
    genuine_dist_std: float

    def __post_init__(self) -> None:
        for name in ("mean_face", "eigenfaces", "fisher_basis", "class_means"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        if len(self.class_labels) != self.class_means.shape[0]:
            raise ValueError("one class mean per enrolled class is required")
        if self.fisher_basis.shape[0] > len(self.class_labels) - 1:
            raise ValueError("Fisher dimension must be at most C - 1")

    def label_index(self, label: str) -> int:
        try:
            return self.class_labels.index(label)
        except ValueError:
            raise UnknownLabelError(label) from None

    def to_dict(self) -> dict:
        return {
            "mean_face": self.mean_face.tolist(),
            "eigenfaces": self.eigenfaces.tolist(),
            "fisher_basis": self.fisher_basis.tolist(),
            "class_labels": list(self.class_labels),
            "class_means": self.class_means.tolist(),
            "genuine_dist_mean": self.genuine_dist_mean,
            "genuine_dist_std": self.genuine_dist_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FaceModel":
        return cls(
            mean_face=np.array(d["mean_face"], dtype=float),
            eigenfaces=np.array(d["eigenfaces"], dtype=float),
            fisher_basis=np.array(d["fisher_basis"], dtype=float),
            class_labels=tuple(d["class_labels"]),
            class_means=np.array(d["class_means"], dtype=float),
            genuine_dist_mean=float(d["genuine_dist_mean"]),
            genuine_dist_std=float(d["genuine_dist_std"]),
        )


_VARIANCE_BUDGET = 0.95  # cumulative eigenvalue fraction kept by default
_MIN_IMAGES_FOR_CROSS_CAL = 4


class _Projection(NamedTuple):
    mean: np.ndarray
    eigenfaces: np.ndarray
    fisher_basis: np.ndarray
    fisher_by_label: dict[str, np.ndarray]


def _fit_projection(
    images_by_label: Mapping[str, Sequence[FaceImage]], pca_keep: int | None
) -> _Projection:
    labels = sorted(images_by_label)
    counts = {lab: len(images_by_label[lab]) for lab in labels}
    n_total = sum(counts.values())
    n_classes = len(labels)
    cap = n_total - n_classes
    if cap < 1:
        raise FaceTrainingError("need at least one more image than classes")

    stacked = np.concatenate(
        [np.stack([img.as_vector() for img in images_by_label[lab]]) for lab in labels]
    )
    pca = snapshot_pca(stacked, cap)
    if pca.components.shape[0] == 0:
        raise FaceTrainingError("training images are identical; nothing to project")
    if pca_keep is not None:
        keep = min(pca_keep, cap)
    else:
        cum = np.cumsum(pca.eigenvalues) / pca.eigenvalues.sum()
        keep = int(np.searchsorted(cum, _VARIANCE_BUDGET) + 1)
        keep = max(keep, min(n_classes - 1, cap))
    components = pca.components[:keep]

    coords = (stacked - pca.mean) @ components.T
    per_class_pca: dict[str, np.ndarray] = {}
    offset = 0
    for lab in labels:
        per_class_pca[lab] = coords[offset : offset + counts[lab]]
        offset += counts[lab]

    lda = train_lda(per_class_pca)
    fisher_by_label = {lab: per_class_pca[lab] @ lda.basis.T for lab in labels}
    return _Projection(
        mean=pca.mean,
        eigenfaces=components,
        fisher_basis=lda.basis,
        fisher_by_label=fisher_by_label,
    )


def _cross_fold_distances(
    images_by_label: Mapping[str, Sequence[FaceImage]], pca_keep: int | None
) -> np.ndarray:
    """Genuine distances of held-out images under fold-trained projections."""
    distances = []
    for parity in (0, 1):
        train = {
            lab: [img for i, img in enumerate(v) if i % 2 == parity]
            for lab, v in images_by_label.items()
        }
        held_out = {
            lab: [img for i, img in enumerate(v) if i % 2 != parity]
            for lab, v in images_by_label.items()
        }
        fold = _fit_projection(train, pca_keep)
        for lab, images in held_out.items():
            center = fold.fisher_by_label[lab].mean(axis=0)
            for img in images:
                vec = fold.fisher_basis @ (
                    fold.eigenfaces @ (img.as_vector() - fold.mean)
                )
                distances.append(np.linalg.norm(vec - center))
    return np.array(distances)


def train_face_model(
    images_by_label: Mapping[str, Sequence[FaceImage]],
    pca_keep: int | None = None,
) -> FaceModel:
    """Full Eigenfaces + Fisherfaces training over the enrolled classes.

    The PCA dimension is capped at N - C (the standard fix that keeps the
    within-class scatter invertible). By default it is further reduced to
    the smallest dimension retaining 95% of the variance: keeping every
    available component lets LDA memorize the training images.

    Calibration statistics are the mean and population standard deviation
    of genuine within-class Fisher-space distances. When every class has at
    least 4 images they come from a two-fold split (distances of held-out
    images under fold-trained projections), which predicts how far fresh
    captures of an enrolled user land; with fewer images the training
    images' own distances are used, which run optimistically small.
    """
    labels = sorted(images_by_label)
    if len(labels) < 2:
        raise FaceTrainingError(f"need at least 2 enrolled classes, got {len(labels)}")
    projection = _fit_projection(images_by_label, pca_keep)
    class_means = np.stack(
        [projection.fisher_by_label[lab].mean(axis=0) for lab in labels]
    )

    genuine_dists = None
    if min(len(v) for v in images_by_label.values()) >= _MIN_IMAGES_FOR_CROSS_CAL:
        try:
            genuine_dists = _cross_fold_distances(images_by_label, pca_keep)
        except FaceTrainingError:
            genuine_dists = None
    if genuine_dists is None:
        genuine_dists = np.concatenate(
            [
                np.linalg.norm(projection.fisher_by_label[lab] - class_means[i], axis=1)
                for i, lab in enumerate(labels)
            ]
        )

    return FaceModel(
        mean_face=projection.mean,
        eigenfaces=projection.eigenfaces,
        fisher_basis=projection.fisher_basis,
        class_labels=tuple(labels),
        class_means=class_means,
        genuine_dist_mean=float(genuine_dists.mean()),
        genuine_dist_std=float(genuine_dists.std()),
    )


def project(model: FaceModel, image: FaceImage) -> np.ndarray:
    """Fisher-space coordinates of an image: center, PCA-project, Fisher-project."""
    pca_coords = model.eigenfaces @ (image.as_vector() - model.mean_face)
    return model.fisher_basis @ pca_coords


def classify(model: FaceModel, image: FaceImage) -> tuple[str, float]:
    """Nearest class mean in Fisher space; exact ties go to the smaller label."""
    vec = project(model, image)
    dists = np.linalg.norm(model.class_means - vec, axis=1)
    best = min(zip(dists, model.class_labels))
    return best[1], float(best[0])


def claimed_distance(model: FaceModel, image: FaceImage, claimed_label: str) -> float:
    """Fisher-space Euclidean distance from the image to the claimed class mean."""
    idx = model.label_index(claimed_label)
    vec = project(model, image)
    return float(np.linalg.norm(vec - model.class_means[idx]))


def face_match_score(
    model: FaceModel, image: FaceImage, claimed_label: str
) -> ModalityScore:
    """Distance to the claimed class mean, calibrated to a match probability.

    Distances up to the genuine-distance mean score 1; beyond it the score
    decays exponentially with the excess measured in genuine-distance
    standard deviations. Monotone decreasing in distance, which is all
    fusion relies on.
    """
    d = claimed_distance(model, image, claimed_label)
    excess = max(0.0, d - model.genuine_dist_mean)
    p_true = float(np.exp(-excess / (model.genuine_dist_std + _CALIBRATION_EPS)))
    return ModalityScore(p_true=p_true, p_false=1.0 - p_true, modality="face")
