"""Command-line pipeline: synth, validate, select-frames, train-sign,
train-handshape, embed, train-classifier, eval, metrics, stability,
export-graph.

Stages communicate through on-disk artifacts (JSONL datasets, JSON
checkpoints, cached embeddings, CSV reports), so each stage is independently
runnable and testable. Every command writes a manifest.json recording the
command, resolved configuration, seed, package version and sha256 of every
artifact; outputs are byte-identical across runs with the same flags and
seed.

Exit codes: 1 usage errors, 2 data validation, 3 training divergence.
Errors are printed to stderr as single-line JSON. Relative --out paths are
resolved under $HANDSHAPE_GNN_OUT when it is set.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, biomech, evaluation, gnn, graphs, heads
from .data import (
    DataValidationError,
    LabelVocab,
    SyntheticSpec,
    class_histogram,
    generate_synthetic,
    load_sequences,
    save_sequences,
    selected_frames,
    write_histogram_csv,
)
from .frames import motion_profile, select_frame
from .nn import TrainingDivergenceError
from .rng import make_rng


class UsageError(ValueError):
    """Bad flags or unusable parameter values."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _resolve_out(path: str) -> Path:
    root = os.environ.get("HANDSHAPE_GNN_OUT")
    out = Path(path)
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, argv: list[str]) -> None:
    config = {
        key: val for key, val in sorted(vars(args).items()) if key != "func" and val is not None
    }
    artifacts = {
        str(p.relative_to(out)): _sha256(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "version": f"v{__version__}",
            "seed": getattr(args, "seed", None),
            "config": config,
            "argv": argv,
            "artifacts": artifacts,
        },
    )


def _load_vocab(args) -> LabelVocab:
    return LabelVocab.load(args.vocab) if getattr(args, "vocab", None) else LabelVocab.default()


def _write_history_csv(path: Path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row["epoch"], repr(row["train_loss"]), repr(row["val_loss"])])


# -- subcommands ---------------------------------------------------------------


def _cmd_synth(args, argv):
    vocab = _load_vocab(args)
    spec = SyntheticSpec(
        classes=args.classes,
        per_class=args.per_class,
        signs_per_class=args.signs_per_class,
        hold_frames=(args.hold_min, args.hold_max),
        transition_frames=(args.transition_min, args.transition_max),
        noise=args.noise,
        rotation=args.rotation,
        scale_jitter=args.scale_jitter,
        translation=args.translation,
        vocab=vocab,
    )
    sequences, info = generate_synthetic(spec, make_rng(args.seed))
    out = _resolve_out(args.out)
    save_sequences(out / "dataset.jsonl", sequences)
    _write_json(out / "holds.json", {sid: asdict(meta) for sid, meta in info.items()})
    _write_manifest(out, "synth", args, argv)
    return 0


def _cmd_validate(args, argv):
    vocab = _load_vocab(args)
    sequences = load_sequences(args.data, vocab)
    lengths = [seq.n_frames for seq in sequences]
    summary = {
        "sequences": len(sequences),
        "frames_total": int(np.sum(lengths)),
        "frames_min": int(np.min(lengths)),
        "frames_max": int(np.max(lengths)),
        "signs": len({seq.sign for seq in sequences}),
        "handshapes": sorted({name for seq in sequences for name in seq.handshapes}),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_select_frames(args, argv):
    vocab = _load_vocab(args)
    sequences = load_sequences(args.data, vocab)
    out = _resolve_out(args.out)
    selection = {
        seq.id: {
            "frame": select_frame(seq.frames),
            "motion": [repr(float(v)) for v in motion_profile(seq.frames)],
        }
        for seq in sequences
    }
    _write_json(out / "selected_frames.json", selection)
    _write_manifest(out, "select-frames", args, argv)
    return 0


def _gnn_config(args) -> gnn.GnnTrainingConfig:
    return gnn.GnnTrainingConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        patience=args.patience,
        max_epochs=args.max_epochs,
        batch_size=args.batch_size,
        temperature=args.temperature,
        dropout=args.dropout,
        val_fraction=args.val_fraction,
    )


def _cmd_train_sign(args, argv):
    vocab = _load_vocab(args)
    sequences = load_sequences(args.data, vocab)
    config = _gnn_config(args)
    result = gnn.train_sign_gnn(sequences, config, args.seed)
    out = _resolve_out(args.out)
    gnn.save_gnn_checkpoint(out / "sign_gnn.json", result, "sign", config)
    _write_history_csv(out / "history.csv", result.history)
    _write_manifest(out, "train-sign", args, argv)
    return 0


def _cmd_train_handshape(args, argv):
    vocab = _load_vocab(args)
    sequences = load_sequences(args.data, vocab)
    frames = [
        (frame, vocab.id_of(label)) for frame, label in selected_frames(sequences)
    ]
    config = _gnn_config(args)
    result = gnn.train_handshape_gnn(frames, config, args.seed)
    out = _resolve_out(args.out)
    gnn.save_gnn_checkpoint(out / "handshape_gnn.json", result, "handshape", config)
    _write_history_csv(out / "history.csv", result.history)
    _write_manifest(out, "train-handshape", args, argv)
    return 0


def _cmd_embed(args, argv):
    vocab = _load_vocab(args)
    sequences = load_sequences(args.data, vocab)
    sign_model, _ = gnn.load_gnn_checkpoint(args.sign_model)
    hand_model, _ = gnn.load_gnn_checkpoint(args.handshape_model)
    out = _resolve_out(args.out)
    with open(out / "embeddings.jsonl", "w") as fh:
        for seq in sequences:
            frame = seq.frames[select_frame(seq.frames)]
            doc = {
                "id": seq.id,
                "sign_emb": gnn.embed_sequence(sign_model, seq).tolist(),
                "hand_emb": gnn.embed_frame(hand_model, frame).tolist(),
                "raw": gnn.raw_features(seq).tolist(),
                "label": seq.primary_handshape(),
            }
            fh.write(json.dumps(doc) + "\n")
    _write_manifest(out, "embed", args, argv)
    return 0


def load_embedding_cache(path: str | Path) -> tuple[dict[str, np.ndarray], list[str], list[str]]:
    """Read a cached-embedding JSONL into feature arrays, labels and ids."""
    sign, hand, raw, labels, ids = [], [], [], [], []
    text = Path(path).read_text()
    if not text.strip():
        raise DataValidationError(f"{path}: empty embeddings file")
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"line {i}: malformed JSON ({exc.msg})") from exc
        for key in ("id", "sign_emb", "hand_emb", "raw", "label"):
            if key not in doc:
                raise DataValidationError(f"line {i}: missing field '{key}'")
        sign.append(doc["sign_emb"])
        hand.append(doc["hand_emb"])
        raw.append(doc["raw"])
        labels.append(doc["label"])
        ids.append(doc["id"])
    features = {
        "sign": np.array(sign, dtype=np.float64),
        "handshape": np.array(hand, dtype=np.float64),
        "raw": np.array(raw, dtype=np.float64),
    }
    return features, labels, ids


def head_features(features: dict[str, np.ndarray], kind: str):
    if kind == "baseline":
        return features["raw"]
    if kind in ("sign", "handshape"):
        return features[kind]
    if kind == "dual":
        return (features["sign"], features["handshape"], features["raw"])
    raise UsageError(f"unknown classifier kind '{kind}'")


def _cmd_train_classifier(args, argv):
    vocab = _load_vocab(args)
    features, label_names, _ = load_embedding_cache(args.embeddings)
    unknown = sorted({name for name in label_names if name not in vocab})
    if unknown:
        raise DataValidationError(f"unknown handshape labels in embeddings: {unknown}")
    labels = np.array([vocab.id_of(name) for name in label_names])
    n = len(labels)
    split_rng = make_rng(args.split_seed if args.split_seed is not None else args.seed, 1)
    order = split_rng.permutation(n)
    n_val = max(1, int(round(n * args.val_fraction)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) < 2 or len(val_idx) < 1:
        raise DataValidationError(f"{n} samples are too few to split for training")
    config = heads.HeadTrainingConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        patience=args.patience,
        max_epochs=args.max_epochs,
        batch_size=args.batch_size,
    )
    head = heads.make_head(args.kind, len(vocab), make_rng(args.seed, 2))
    feats = head_features(features, args.kind)
    result = heads.train_head(
        head,
        heads.slice_features(feats, train_idx),
        labels[train_idx],
        heads.slice_features(feats, val_idx),
        labels[val_idx],
        config,
        args.seed,
    )
    predictions = heads.predict(head, heads.slice_features(feats, val_idx))
    report = evaluation.evaluate(predictions, labels[val_idx], vocab)
    out = _resolve_out(args.out)
    from .nn import save_checkpoint

    save_checkpoint(
        out / f"{args.kind}_head.json",
        head.state(),
        header={"kind": args.kind, "classes": len(vocab), "config": asdict(config)},
    )
    _write_history_csv(out / "history.csv", result.history)
    evaluation.report_to_json(report, out / "report.json")
    (out / "report.txt").write_text(evaluation.format_report_table(report))
    _write_manifest(out, "train-classifier", args, argv)
    return 0


def _cmd_eval(args, argv):
    vocab = _load_vocab(args)
    truths, predictions = [], []
    with open(args.predictions, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "truth", "pred"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataValidationError(
                f"{args.predictions}: expected CSV header with columns {sorted(required)}"
            )
        for i, row in enumerate(reader, start=2):
            for key in ("truth", "pred"):
                if row[key] not in vocab:
                    raise DataValidationError(
                        f"line {i}: unknown handshape '{row[key]}' in column '{key}'"
                    )
            truths.append(vocab.id_of(row["truth"]))
            predictions.append(vocab.id_of(row["pred"]))
    if not truths:
        raise DataValidationError(f"{args.predictions}: no prediction rows")
    report = evaluation.evaluate(predictions, truths, vocab)
    out = _resolve_out(args.out)
    evaluation.report_to_json(report, out / "report.json")
    (out / "report.txt").write_text(evaluation.format_report_table(report))
    evaluation.write_confusion_csv(report, vocab, out / "confusion.csv")
    _write_manifest(out, "eval", args, argv)
    return 0


def _cmd_metrics(args, argv):
    vocab = _load_vocab(args)
    sequences = load_sequences(args.data, vocab)
    frames = [frame for frame, _ in selected_frames(sequences)]
    references = biomech.load_references(args.references) if args.references else None
    histograms = biomech.metric_distributions(frames, references, bins=args.bins)
    out = _resolve_out(args.out)
    summary = {}
    for name, hist in histograms.items():
        biomech.write_histogram_csv(hist, out / f"{name}.csv")
        summary[name] = {"mean": hist.mean, "median": hist.median, "modes": hist.modes}
    _write_json(out / "summary.json", summary)
    write_histogram_csv(class_histogram(sequences, vocab), out / "class_histogram.csv")
    _write_manifest(out, "metrics", args, argv)
    return 0


def _cmd_stability(args, argv):
    if (args.embeddings is None) == (args.data is None):
        raise UsageError("provide exactly one of --embeddings or --data")
    if args.embeddings:
        features, _, _ = load_embedding_cache(args.embeddings)
        points = features[args.stream]
    else:
        vocab = _load_vocab(args)
        sequences = load_sequences(args.data, vocab)
        points = np.array(
            [gnn.frame_node_features(frame).reshape(-1) for frame, _ in selected_frames(sequences)]
        )
    matrices = evaluation.stability_report(
        points, k_small=args.k_small, k_large=args.k_large, seed=args.seed
    )
    out = _resolve_out(args.out)
    for name, matrix in matrices.items():
        evaluation.write_matrix_csv(matrix, out / f"stability_{name}.csv")
    _write_manifest(out, "stability", args, argv)
    return 0


def _cmd_export_graph(args, argv):
    if args.variant == "anatomical":
        edges, n = graphs.build_anatomical_edges(), 21
    elif args.variant == "handshape":
        edges, n = graphs.build_handshape_edges(), 21
    else:
        edges, n = graphs.build_sequence_graph(frames=args.frames), 21 * args.frames
    out = _resolve_out(args.out)
    (out / f"{args.variant}.json").write_text(graphs.graph_to_json(edges, n) + "\n")
    (out / f"{args.variant}.dot").write_text(graphs.graph_to_dot(edges, n, name=args.variant))
    _write_manifest(out, "export-graph", args, argv)
    return 0


# -- parser ---------------------------------------------------------------------


def _add_gnn_training_flags(p: _Parser) -> None:
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--temperature", type=float, default=10.0)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, required=True)


def build_parser() -> _Parser:
    parser = _Parser(prog="handshape-gnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--signs-per-class", type=int, default=1)
    p.add_argument("--hold-min", type=int, default=4)
    p.add_argument("--hold-max", type=int, default=6)
    p.add_argument("--transition-min", type=int, default=3)
    p.add_argument("--transition-max", type=int, default=6)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--rotation", type=float, default=0.0)
    p.add_argument("--scale-jitter", type=float, default=0.0)
    p.add_argument("--translation", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate", help="validate a dataset file and print a summary")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("select-frames", help="emit representative frame indices")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_select_frames)

    p = sub.add_parser("train-sign", help="train the temporal model on sequence graphs")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    _add_gnn_training_flags(p)
    p.set_defaults(func=_cmd_train_sign)

    p = sub.add_parser("train-handshape", help="train the static model on selected frames")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    _add_gnn_training_flags(p)
    p.set_defaults(func=_cmd_train_handshape)

    p = sub.add_parser("embed", help="cache embeddings and raw features per sequence")
    p.add_argument("--data", required=True)
    p.add_argument("--sign-model", required=True)
    p.add_argument("--handshape-model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("train-classifier", help="train a classification head")
    p.add_argument("--kind", choices=("baseline", "sign", "handshape", "dual"), required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("eval", help="score a predictions CSV (columns id,truth,pred)")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("metrics", help="biomechanical metric distributions")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--references")
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("stability", help="cluster-stability matrices across k")
    p.add_argument("--embeddings")
    p.add_argument("--data")
    p.add_argument("--stream", choices=("sign", "handshape", "raw"), default="handshape")
    p.add_argument("--k-small", type=int, default=30)
    p.add_argument("--k-large", type=int, default=50)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab")
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("export-graph", help="export a graph variant as JSON and DOT")
    p.add_argument("--variant", choices=("anatomical", "handshape", "sequence"), required=True)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_graph)

    return parser


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    except FileNotFoundError as exc:
        return _fail("usage", str(exc), 1)
    except DataValidationError as exc:
        return _fail("data", str(exc), 2)
    except TrainingDivergenceError as exc:
        return _fail("divergence", str(exc), 3)
    except ValueError as exc:
        return _fail("usage", str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
