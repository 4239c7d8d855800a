"""Sequence ingestion, the handshape label vocabulary, dataset splitting,
and a parametric synthetic generator.

On-disk dataset format is JSON Lines, one sequence per line:

    {"id": str, "sign": str, "handshapes": [str, ...],
     "frames": [[[x, y, z] * 21], ...]}

The bundled vocabulary lists 37 handshape names, one per line; line number
is the class id.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .frames import select_frame

log = logging.getLogger(__name__)

N_KEYPOINTS = 21


class DataValidationError(ValueError):
    """Input data violated the documented format."""


@dataclass
class SignSequence:
    """A labeled temporal sequence of 21-keypoint frames."""

    id: str
    sign: str
    handshapes: list[str]
    frames: np.ndarray  # (T, 21, 3) float64

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    def primary_handshape(self) -> str:
        return self.handshapes[0]


class LabelVocab:
    """Ordered handshape names with contiguous ids."""

    def __init__(self, names: list[str]):
        if len(set(names)) != len(names):
            raise ValueError("vocabulary names must be unique")
        if not names:
            raise ValueError("vocabulary must be non-empty")
        self.names = list(names)
        self.index = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def id_of(self, name: str) -> int:
        return self.index[name]

    @classmethod
    def load(cls, path: str | Path) -> "LabelVocab":
        lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
        return cls([ln for ln in lines if ln])

    @classmethod
    def default(cls) -> "LabelVocab":
        text = resources.files("handshape_gnn.assets").joinpath("handshapes_37.txt").read_text()
        return cls([ln for ln in text.splitlines() if ln.strip()])


def _validate_frames(raw, line_no: int, seq_id: str) -> np.ndarray:
    frames = np.asarray(raw, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[1] != N_KEYPOINTS or frames.shape[2] != 3:
        for t, frame in enumerate(raw):
            if len(frame) != N_KEYPOINTS:
                raise DataValidationError(
                    f"line {line_no}: sequence '{seq_id}' frame {t} has "
                    f"{len(frame)} keypoints, expected {N_KEYPOINTS}"
                )
        raise DataValidationError(
            f"line {line_no}: sequence '{seq_id}' frames have shape {frames.shape}, "
            f"expected (T, {N_KEYPOINTS}, 3)"
        )
    if frames.shape[0] < 1:
        raise DataValidationError(f"line {line_no}: sequence '{seq_id}' has no frames")
    if not np.all(np.isfinite(frames)):
        raise DataValidationError(f"line {line_no}: sequence '{seq_id}' has non-finite coordinates")
    return frames


def load_sequences(path: str | Path, vocab: LabelVocab) -> list[SignSequence]:
    """Parse and validate a JSONL dataset; errors carry line numbers."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not any(ln.strip() for ln in lines):
        raise DataValidationError(f"{path}: empty dataset file")
    sequences = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"line {i}: malformed JSON ({exc.msg})") from exc
        for key in ("id", "sign", "handshapes", "frames"):
            if key not in doc:
                raise DataValidationError(f"line {i}: missing field '{key}'")
        if not doc["handshapes"]:
            raise DataValidationError(f"line {i}: sequence '{doc['id']}' has no handshape labels")
        for name in doc["handshapes"]:
            if name not in vocab:
                raise DataValidationError(
                    f"line {i}: unknown handshape label '{name}' in sequence '{doc['id']}'"
                )
        frames = _validate_frames(doc["frames"], i, doc["id"])
        sequences.append(
            SignSequence(
                id=str(doc["id"]),
                sign=str(doc["sign"]),
                handshapes=[str(h) for h in doc["handshapes"]],
                frames=frames,
            )
        )
    return sequences


def save_sequences(path: str | Path, sequences: list[SignSequence]) -> None:
    with open(path, "w") as fh:
        for seq in sequences:
            doc = {
                "id": seq.id,
                "sign": seq.sign,
                "handshapes": seq.handshapes,
                "frames": seq.frames.tolist(),
            }
            fh.write(json.dumps(doc) + "\n")


@dataclass
class DatasetSplit:
    train_ids: list[str]
    val_ids: list[str]
    seed: int


def split(sequences: list[SignSequence], fraction: float, seed: int) -> DatasetSplit:
    """Deterministic shuffled train/validation split.

    Stratified by primary handshape label when every class present has at
    least 2 members, so per-class proportions hold within one item.
    """
    from .rng import make_rng

    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if len(sequences) < 2:
        raise DataValidationError("cannot split fewer than 2 sequences")
    rng = make_rng(seed)
    by_label: dict[str, list[str]] = {}
    for seq in sequences:
        by_label.setdefault(seq.primary_handshape(), []).append(seq.id)
    stratify = all(len(ids) >= 2 for ids in by_label.values())
    train_ids: list[str] = []
    val_ids: list[str] = []
    if stratify:
        for label in sorted(by_label):
            ids = sorted(by_label[label])
            order = rng.permutation(len(ids))
            k = int(round(len(ids) * fraction))
            k = min(max(k, 1), len(ids) - 1)
            train_ids.extend(ids[j] for j in order[:k])
            val_ids.extend(ids[j] for j in order[k:])
    else:
        ids = sorted(seq.id for seq in sequences)
        order = rng.permutation(len(ids))
        k = int(round(len(ids) * fraction))
        k = min(max(k, 1), len(ids) - 1)
        train_ids = [ids[j] for j in order[:k]]
        val_ids = [ids[j] for j in order[k:]]
    return DatasetSplit(train_ids=sorted(train_ids), val_ids=sorted(val_ids), seed=seed)


def class_histogram(sequences: list[SignSequence], vocab: LabelVocab) -> dict[str, int]:
    """Counts per vocabulary entry over all (sequence, label) pairs."""
    counts = {name: 0 for name in vocab.names}
    for seq in sequences:
        for name in seq.handshapes:
            counts[name] += 1
    return counts


def write_histogram_csv(counts: dict[str, int], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["handshape", "count"])
        for name, count in counts.items():
            writer.writerow([name, count])


# -- parametric hand poses ---------------------------------------------------


def _rotate(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    return (
        v * np.cos(angle)
        + np.cross(axis, v) * np.sin(angle)
        + axis * np.dot(axis, v) * (1.0 - np.cos(angle))
    )


# finger layout: splay angle from +y in the palm plane, palm-bone length,
# and the three phalanx lengths (base of each chain sits at wrist + palm bone)
_FINGER_LAYOUT = [
    (-1.15, 0.35, (0.30, 0.22, 0.18)),  # thumb
    (-0.30, 0.85, (0.38, 0.24, 0.18)),  # index
    (0.00, 0.88, (0.42, 0.26, 0.19)),  # middle
    (0.28, 0.84, (0.38, 0.24, 0.18)),  # ring
    (0.55, 0.76, (0.30, 0.20, 0.16)),  # pinky
]
# fraction of the total curl rotation spent at each of the three bends
_CURL_WEIGHTS = (0.45, 0.60, 0.35)
_MAX_CURL = 2.4  # radians of cumulative bend for curl = 1


def hand_pose(curls) -> np.ndarray:
    """A 21x3 hand with the wrist at the origin and per-finger curl in [0, 1].

    curl 0 is a straight finger, curl 1 a full bend toward the palm; the
    thumb bends sideways across the palm. Used for synthetic prototypes.
    """
    curls = list(curls)
    if len(curls) != 5:
        raise ValueError(f"expected 5 curl values, got {len(curls)}")
    pts = np.zeros((21, 3))
    palm_normal = np.array([0.0, 0.0, 1.0])
    for f, (splay, palm_len, lengths) in enumerate(_FINGER_LAYOUT):
        direction = np.array([np.sin(splay), np.cos(splay), 0.0])
        base = direction * palm_len
        bend_axis = np.cross(palm_normal, direction)
        if f == 0:
            # thumb opposes: bend axis tilted so it sweeps across the palm
            bend_axis = _rotate(bend_axis, direction, -0.9)
        node = 1 + 4 * f
        pts[node] = base
        d = direction
        pos = base
        for seg, (length, w) in enumerate(zip(lengths, _CURL_WEIGHTS)):
            d = _rotate(d, bend_axis, curls[f] * _MAX_CURL * w)
            pos = pos + d * length
            pts[node + 1 + seg] = pos
    return pts


def class_curl_patterns(n_classes: int) -> list[tuple[float, ...]]:
    """Deterministic list of distinct per-finger curl patterns, one per class.

    Binary patterns ordered by (number of curled fingers, tuple) give up to
    32 classes; half-curl variants extend the range to 64.
    """
    from itertools import product

    binary = sorted(product((0.0, 1.0), repeat=5), key=lambda p: (sum(p), p))
    if n_classes <= len(binary):
        return binary[:n_classes]
    halves = sorted(product((0.5, 1.0), repeat=5), key=lambda p: (sum(p), p))
    extended = binary + [p for p in halves if p not in binary]
    if n_classes > len(extended):
        raise ValueError(f"at most {len(extended)} synthetic classes supported")
    return extended[:n_classes]


_MULTISET_LEVELS = (1.0, 0.55, 0.3)


def multiset_class_specs(n_classes: int) -> list[tuple[int, float]]:
    """Classes defined by (curled-finger count, curl level); which fingers
    curl is sampled per rendition, like number-style handshapes."""
    combos = [(count, level) for level in _MULTISET_LEVELS for count in (1, 2, 3, 4)]
    if n_classes > len(combos):
        raise ValueError(f"at most {len(combos)} multiset classes supported")
    return combos[:n_classes]


@dataclass
class SyntheticSpec:
    """Configuration of the synthetic sequence generator.

    Every sequence interpolates a lead-in prototype toward the held class
    prototype, holds it, then interpolates out toward a lead-out prototype.
    Lead poses come from other classes, so the hold is the unique motion
    minimum. Optional per-sequence rotation/scale/translation and per-frame
    Gaussian jitter make the classes harder.
    """

    classes: int = 8
    per_class: int = 50
    signs_per_class: int = 1
    hold_frames: tuple[int, int] = (4, 6)
    transition_frames: tuple[int, int] = (3, 6)
    noise: float = 0.0
    style_jitter: float = 0.0
    multiset_classes: bool = False
    signers: int = 0
    signer_style: float = 0.0
    finger_swap_prob: float = 0.0
    glitch_prob: float = 0.0
    glitch_scale: float = 0.25
    rotation: float = 0.0
    scale_jitter: float = 0.0
    translation: float = 0.0
    vocab: LabelVocab | None = None

    def class_names(self) -> list[str]:
        vocab = self.vocab if self.vocab is not None else LabelVocab.default()
        if self.classes > len(vocab):
            raise ValueError(f"{self.classes} classes exceed the {len(vocab)}-name vocabulary")
        return vocab.names[: self.classes]


@dataclass
class SequenceInfo:
    """Generator-side metadata for one sequence (hold span, context poses)."""

    hold_start: int
    hold_end: int  # inclusive
    class_id: int
    lead_in: int
    lead_out: int
    signer: int = 0
    variant: tuple[int, ...] = ()  # curled-finger indices of the held rendition


def _rigid_transform(rng: np.random.Generator, spec: SyntheticSpec):
    rot = np.eye(3)
    if spec.rotation > 0:
        for k in (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0])):
            angle = rng.uniform(-spec.rotation, spec.rotation)
            kmat = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
            rot = (np.eye(3) + np.sin(angle) * kmat + (1 - np.cos(angle)) * kmat @ kmat) @ rot
    scale = 1.0
    if spec.scale_jitter > 0:
        scale = rng.uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter)
    offset = np.zeros(3)
    if spec.translation > 0:
        offset = rng.uniform(-spec.translation, spec.translation, 3)
    return rot, scale, offset


def generate_synthetic(
    spec: SyntheticSpec, rng: np.random.Generator
) -> tuple[list[SignSequence], dict[str, SequenceInfo]]:
    """Generate labeled sequences plus per-sequence hold metadata."""
    if spec.classes < 2:
        raise ValueError(f"need at least 2 classes, got {spec.classes}")
    if spec.noise < 0:
        raise ValueError(f"noise must be non-negative, got {spec.noise}")
    if not 0.0 <= spec.glitch_prob < 1.0:
        raise ValueError(f"glitch_prob must lie in [0, 1), got {spec.glitch_prob}")
    if not 0.0 <= spec.finger_swap_prob < 1.0:
        raise ValueError(f"finger_swap_prob must lie in [0, 1), got {spec.finger_swap_prob}")
    if spec.per_class < 1 or spec.signs_per_class < 1:
        raise ValueError("per_class and signs_per_class must be positive")
    names = spec.class_names()
    patterns = class_curl_patterns(spec.classes)
    prototypes = [hand_pose(p) for p in patterns]
    combos = multiset_class_specs(spec.classes) if spec.multiset_classes else None

    def class_pattern(class_id: int) -> np.ndarray:
        if combos is not None:
            # multiset class: how many fingers curl, and how far; which fingers
            # varies per rendition
            count, level = combos[class_id]
            pattern = np.zeros(5)
            pattern[rng.permutation(5)[:count]] = level
            return pattern
        return np.array(patterns[class_id])

    # per-signer articulation habits: a fixed curl-space offset per signer,
    # shared by every pose that signer produces
    signer_offsets = (
        rng.normal(0.0, spec.signer_style, (spec.signers, 5)) if spec.signers > 0 else None
    )

    # fixed context pair(s) per class: the sign identity is (class, lead-in, lead-out)
    contexts: dict[int, list[tuple[int, int]]] = {}
    for y in range(spec.classes):
        others = [c for c in range(spec.classes) if c != y]
        pairs = []
        seen = set()
        while len(pairs) < spec.signs_per_class:
            a = others[int(rng.integers(len(others)))]
            b = others[int(rng.integers(len(others)))]
            if (a, b) not in seen:
                seen.add((a, b))
                pairs.append((a, b))
        contexts[y] = pairs

    sequences = []
    info: dict[str, SequenceInfo] = {}
    counter = 0
    for y in range(spec.classes):
        for k in range(spec.per_class):
            a, b = contexts[y][k % spec.signs_per_class]
            t_in = int(rng.integers(spec.transition_frames[0], spec.transition_frames[1] + 1))
            hold = int(rng.integers(spec.hold_frames[0], spec.hold_frames[1] + 1))
            t_out = int(rng.integers(spec.transition_frames[0], spec.transition_frames[1] + 1))
            signer = int(rng.integers(spec.signers)) if spec.signers > 0 else 0
            offset = signer_offsets[signer] if signer_offsets is not None else 0.0
            pat_a, pat_y, pat_b = (class_pattern(c) for c in (a, y, b))
            variant = tuple(int(i) for i in np.nonzero(pat_y)[0])
            if spec.style_jitter > 0 or signer_offsets is not None or combos is not None:
                # articulatory variation: the signer's habitual curl offset plus
                # per-sequence jitter, applied in curl space rather than
                # coordinate space
                pose_a, pose_y, pose_b = (
                    hand_pose(
                        np.clip(pat + offset + rng.normal(0, spec.style_jitter, 5), 0.0, 1.0)
                    )
                    for pat in (pat_a, pat_y, pat_b)
                )
            else:
                pose_a, pose_y, pose_b = prototypes[a], prototypes[y], prototypes[b]
            frames = []
            for step in range(t_in):
                w = (step + 1) / (t_in + 1)  # strictly between lead-in and hold pose
                frames.append(pose_a * (1 - w) + pose_y * w)
            frames.extend([pose_y.copy() for _ in range(hold)])
            for step in range(t_out):
                w = (step + 1) / (t_out + 1)
                frames.append(pose_y * (1 - w) + pose_b * w)
            stacked = np.stack(frames)
            rot, scale, offset = _rigid_transform(rng, spec)
            stacked = scale * (stacked @ rot.T) + offset
            if spec.noise > 0:
                stacked = stacked + rng.normal(0.0, spec.noise, stacked.shape)
            if spec.finger_swap_prob > 0:
                # tracker identity confusion: adjacent non-thumb fingers swap
                # keypoint blocks, consistently across the whole sequence
                for left in (5, 9, 13):
                    if rng.random() < spec.finger_swap_prob:
                        right = left + 4
                        block = stacked[:, left : left + 4].copy()
                        stacked[:, left : left + 4] = stacked[:, right : right + 4]
                        stacked[:, right : right + 4] = block
            if spec.glitch_prob > 0:
                # heavy-tailed tracking failures: a keypoint occasionally jumps
                glitched = rng.random(stacked.shape[:2]) < spec.glitch_prob
                jumps = rng.normal(0.0, spec.glitch_scale, stacked.shape)
                stacked = np.where(glitched[:, :, None], stacked + jumps, stacked)
            seq_id = f"seq-{counter:05d}"
            counter += 1
            sequences.append(
                SignSequence(
                    id=seq_id,
                    sign=f"{names[y]}:{names[a]}>{names[b]}",
                    handshapes=[names[y]],
                    frames=stacked,
                )
            )
            info[seq_id] = SequenceInfo(
                hold_start=t_in,
                hold_end=t_in + hold - 1,
                class_id=y,
                lead_in=a,
                lead_out=b,
                signer=signer,
            )
    return sequences, info


def prototype_spacing(n_classes: int) -> float:
    """Smallest mean per-keypoint distance between any two class prototypes."""
    protos = [hand_pose(p) for p in class_curl_patterns(n_classes)]
    best = np.inf
    for i in range(len(protos)):
        for j in range(i + 1, len(protos)):
            d = np.linalg.norm(protos[i] - protos[j], axis=1).mean()
            best = min(best, d)
    return float(best)


def selected_frames(sequences: list[SignSequence]) -> list[tuple[np.ndarray, str]]:
    """(representative frame, primary handshape label) per sequence."""
    out = []
    for seq in sequences:
        idx = select_frame(seq.frames)
        if len(seq.handshapes) > 1:
            log.info(
                "sequence %s has %d handshape labels; using '%s'",
                seq.id,
                len(seq.handshapes),
                seq.handshapes[0],
            )
        out.append((seq.frames[idx], seq.primary_handshape()))
    return out
