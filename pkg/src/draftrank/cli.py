"""Command-line entry point.

Subcommands: import, split, train, finetune, eval, autoencoder-train,
encode, export-embeddings, project, strength, serve, config. Every command
that writes outputs also writes a run manifest (seeds, config digests, and
input digests) next to its primary output, enough to reproduce the run
bit for bit. Flags beat the optional --config JSON file, which beats
built-in defaults. Relative input paths resolve against $DRAFTRANK_DATA_ROOT
when it is set.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cards import (CardDb, WideCsvConventions, import_wide_pick_csv,
                    parse_meta_csv, parse_pick_jsonl, split_dataset, write_picks_jsonl)
from .representation import (CardSources, RepresentationConfig, Vectorizer,
                             features_config, load_vector_jsonl, write_vector_jsonl)

PROG = "draftrank"


def _resolve(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    root = os.environ.get("DRAFTRANK_DATA_ROOT")
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Collects run provenance; written next to the primary output."""

    def __init__(self, command: str, argv: list[str]):
        self.data = {
            "command": command,
            "argv": argv,
            "version": __version__,
            "seeds": {},
            "config_digests": {},
            "input_digests": {},
            "outputs": [],
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        self._t0 = time.monotonic()

    def seed(self, name: str, value) -> None:
        if value is not None:
            self.data["seeds"][name] = value

    def config(self, name: str, digest: str) -> None:
        self.data["config_digests"][name] = digest

    def input(self, path: Path | None) -> None:
        if path is not None and Path(path).is_file():
            self.data["input_digests"][str(path)] = _sha256_file(Path(path))

    def output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def write(self, stream=None) -> None:
        self.data["wall_clock_s"] = round(time.monotonic() - self._t0, 3)
        text = json.dumps(self.data, indent=1, sort_keys=True)
        if self.data["outputs"]:
            path = Path(self.data["outputs"][0]).with_suffix(
                Path(self.data["outputs"][0]).suffix + ".manifest.json")
            path.write_text(text + "\n", encoding="utf-8")
        else:
            # no file outputs: emit on stderr so stdout stays machine-readable
            print(text, file=stream or sys.stderr)


def _load_card_db(args, manifest: Manifest) -> CardDb:
    path = _resolve(args.cards)
    manifest.input(path)
    return CardDb.parse(path)


def _load_repr(args, manifest: Manifest) -> RepresentationConfig:
    if getattr(args, "repr", None):
        path = _resolve(args.repr)
        manifest.input(path)
        config = RepresentationConfig.from_json(path.read_text(encoding="utf-8"))
    else:
        config = features_config()
    manifest.config("representation", config.config_hash)
    return config


def _load_sources(args, manifest: Manifest) -> CardSources:
    sources = CardSources()
    if getattr(args, "meta", None):
        path = _resolve(args.meta)
        manifest.input(path)
        schema = None
        if getattr(args, "meta_schema", None):
            spath = _resolve(args.meta_schema)
            manifest.input(spath)
            schema = json.loads(spath.read_text(encoding="utf-8"))
        sources.meta = parse_meta_csv(path, schema=schema)
    if getattr(args, "text_vectors", None):
        path = _resolve(args.text_vectors)
        manifest.input(path)
        sources.text_vectors = load_vector_jsonl(path)
    if getattr(args, "image_latents", None):
        path = _resolve(args.image_latents)
        manifest.input(path)
        sources.image_latents = load_vector_jsonl(path)
    return sources


def _load_picks(path: Path, card_db: CardDb | None = None):
    known = set(card_db.by_id) if card_db is not None else None
    result = parse_pick_jsonl(path, known_ids=known)
    if result.report.rejected_total:
        print(f"picks: {result.report.summary()}", file=sys.stderr)
    return result.events


def _vectorizer(args, manifest) -> tuple[CardDb, Vectorizer]:
    db = _load_card_db(args, manifest)
    config = _load_repr(args, manifest)
    sources = _load_sources(args, manifest)
    return db, Vectorizer(config, db, sources)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_import(args, manifest: Manifest) -> int:
    db = _load_card_db(args, manifest)
    picks_path = _resolve(args.picks)
    manifest.input(picks_path)
    if args.format == "wide":
        conventions = WideCsvConventions(
            pack_prefix=args.pack_prefix, pool_prefix=args.pool_prefix,
            zero_indexed=args.zero_indexed, draft_id_column=args.draft_column,
            pack_number_column=args.pack_number_column,
            pick_number_column=args.pick_number_column, pick_column=args.pick_column)
        result = import_wide_pick_csv(picks_path, conventions, db.by_name)
    else:
        result = parse_pick_jsonl(picks_path, known_ids=set(db.by_id))
    out = _resolve(args.out)
    write_picks_jsonl(result.events, out)
    manifest.output(out)
    print(f"imported {result.report.summary()} -> {out}")
    return 0


def cmd_split(args, manifest: Manifest) -> int:
    picks_path = _resolve(args.picks)
    manifest.input(picks_path)
    manifest.seed("split", args.seed)
    events = _load_picks(picks_path)
    split = split_dataset(events, args.fraction, args.seed)
    train_out, test_out = _resolve(args.train_out), _resolve(args.test_out)
    write_picks_jsonl(split.train, train_out)
    write_picks_jsonl(split.test, test_out)
    manifest.output(train_out)
    manifest.output(test_out)
    print(f"split {len(events)} events into {len(split.train)} train / "
          f"{len(split.test)} test (fraction {args.fraction}, seed {args.seed})")
    return 0


def _training_config(args):
    from .training import TrainingConfig
    return TrainingConfig(margin=args.margin, batch_size=args.batch_size,
                          epochs=args.epochs, learning_rate=args.learning_rate,
                          seed=args.seed, shuffle=not args.no_shuffle,
                          warm_start=str(_resolve(args.warm_start))
                          if getattr(args, "warm_start", None) else None)


def _model_config(args, vectorizer):
    from .model import ModelConfig
    if getattr(args, "model_config", None):
        spec = json.loads(_resolve(args.model_config).read_text(encoding="utf-8"))
        spec.setdefault("input_dim", vectorizer.total_dim)
        spec.setdefault("config_hash", vectorizer.config_hash)
        spec.setdefault("seed", args.seed)
        return ModelConfig.from_dict(spec)
    return None


def _run_training(args, manifest: Manifest, base=None) -> int:
    from .training import fine_tune, history_csv, train
    db, vectorizer = _vectorizer(args, manifest)
    picks_path = _resolve(args.picks)
    manifest.input(picks_path)
    manifest.seed("training", args.seed)
    events = _load_picks(picks_path, db)
    eval_events = None
    if getattr(args, "eval_picks", None):
        eval_path = _resolve(args.eval_picks)
        manifest.input(eval_path)
        eval_events = _load_picks(eval_path, db)
    out = _resolve(args.out)
    config = _training_config(args)
    if base is not None:
        model, history = fine_tune(base, events, vectorizer, config,
                                   eval_events=eval_events, card_db=db, out_path=out)
    else:
        model, history = train(events, vectorizer, config, eval_events=eval_events,
                               card_db=db, model_config=_model_config(args, vectorizer),
                               out_path=out)
    manifest.output(out)
    manifest.output(f"{out}.json")
    if args.history:
        hist_path = _resolve(args.history)
        hist_path.write_text(history_csv(history), encoding="utf-8")
        manifest.output(hist_path)
    for h in history:
        top1 = f" top1={h.eval_top1:.4f}" if h.eval_top1 is not None else ""
        print(f"epoch {h.epoch}: loss={h.mean_loss:.4f}{top1} ({h.seconds:.1f}s)")
    print(f"checkpoint -> {out} (config {vectorizer.config_hash})")
    return 0


def cmd_train(args, manifest: Manifest) -> int:
    return _run_training(args, manifest)


def cmd_finetune(args, manifest: Manifest) -> int:
    base = _resolve(args.base)
    manifest.input(base)
    return _run_training(args, manifest, base=str(base))


def cmd_eval(args, manifest: Manifest) -> int:
    from .evaluation import top1_accuracy
    from .model import load_checkpoint
    db, vectorizer = _vectorizer(args, manifest)
    ckpt = _resolve(args.ckpt)
    manifest.input(ckpt)
    model = load_checkpoint(ckpt, expect_config_hash=vectorizer.config_hash)
    picks_path = _resolve(args.picks)
    manifest.input(picks_path)
    events = _load_picks(picks_path, db)
    report = top1_accuracy(model, events, vectorizer, card_db=db)
    out = _resolve(args.report)
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    manifest.output(out)
    if args.matrix:
        matrix_path = _resolve(args.matrix)
        matrix_path.write_text(report.matrix_csv(), encoding="utf-8")
        manifest.output(matrix_path)
    acc = report.overall_accuracy
    print(f"top-1 accuracy: {acc:.4f} over {report.total_events} events"
          if acc is not None else "no events")
    return 0


def cmd_autoencoder_train(args, manifest: Manifest) -> int:
    from .autoencoder import (AutoencoderConfig, load_image, save_autoencoder,
                              train_autoencoder)
    image_dir = _resolve(args.images)
    paths = sorted(p for p in image_dir.iterdir()
                   if p.suffix.lower() in (".png", ".ppm", ".jpg", ".jpeg"))
    if not paths:
        print(f"no images found in {image_dir}", file=sys.stderr)
        return 1
    images = np.stack([load_image(p, resize_to=(args.height, args.width))
                       for p in paths])
    manifest.seed("autoencoder", args.seed)
    config = AutoencoderConfig(height=args.height, width=args.width,
                               latent_dim=args.latent_dim, seed=args.seed,
                               learning_rate=args.learning_rate,
                               batch_size=args.batch_size)
    model, history = train_autoencoder(images, args.latent_dim, args.epochs, config)
    out = _resolve(args.out)
    save_autoencoder(model, out)
    manifest.output(out)
    print(f"{len(paths)} images, latent {args.latent_dim}: "
          f"mse {history[0]:.5f} -> {history[-1]:.5f} over {args.epochs} epochs")
    return 0


def cmd_encode(args, manifest: Manifest) -> int:
    from .autoencoder import encode_image_latent, load_autoencoder, load_image
    ae_path = _resolve(args.autoencoder)
    manifest.input(ae_path)
    model = load_autoencoder(ae_path)
    image_dir = _resolve(args.images)
    latents = {}
    size = (model.config.height, model.config.width)
    for p in sorted(image_dir.iterdir()):
        if p.suffix.lower() in (".png", ".ppm", ".jpg", ".jpeg"):
            latents[p.stem] = encode_image_latent(model, load_image(p, resize_to=size))
    out = _resolve(args.out)
    write_vector_jsonl(latents, out)
    manifest.output(out)
    print(f"encoded {len(latents)} images -> {out}")
    return 0


def cmd_export_embeddings(args, manifest: Manifest) -> int:
    from .evaluation import export_embeddings, write_embeddings_csv
    from .model import load_checkpoint
    db, vectorizer = _vectorizer(args, manifest)
    ckpt = _resolve(args.ckpt)
    manifest.input(ckpt)
    model = load_checkpoint(ckpt, expect_config_hash=vectorizer.config_hash)
    ids = [c.card_id for c in db.cards()
           if args.set is None or c.set_code == args.set]
    rows = export_embeddings(model, vectorizer, ids,
                             include_empty_deck=args.include_empty_deck)
    out = _resolve(args.out)
    if args.format == "jsonl":
        write_vector_jsonl({label: vec for label, vec in rows}, out)
    else:
        write_embeddings_csv(rows, out)
    manifest.output(out)
    print(f"exported {len(rows)} embeddings -> {out}")
    return 0


def cmd_project(args, manifest: Manifest) -> int:
    from .evaluation import pca_project
    emb_path = _resolve(args.embeddings)
    manifest.input(emb_path)
    labels, vectors = [], []
    with open(emb_path, "r", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            labels.append(row[0])
            vectors.append([float(v) for v in row[1:]])
    points, ratio = pca_project(np.array(vectors))
    out = _resolve(args.out)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "x", "y"])
        for label, (x, y) in zip(labels, points):
            writer.writerow([label, repr(float(x)), repr(float(y))])
    manifest.output(out)
    print(f"projected {len(labels)} points "
          f"(explained variance {ratio[0]:.3f} + {ratio[1]:.3f}) -> {out}")
    return 0


def cmd_strength(args, manifest: Manifest) -> int:
    from .evaluation import strength_ranking
    from .model import load_checkpoint
    db, vectorizer = _vectorizer(args, manifest)
    ckpt = _resolve(args.ckpt)
    manifest.input(ckpt)
    model = load_checkpoint(ckpt, expect_config_hash=vectorizer.config_hash)
    ids = [c.card_id for c in db.cards()
           if args.set is None or c.set_code == args.set]
    ranking = strength_ranking(model, ids, vectorizer)
    out = _resolve(args.out)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "card_id", "name", "distance_to_empty_deck"])
        for i, (cid, dist) in enumerate(ranking, start=1):
            writer.writerow([i, cid, db[cid].name, repr(dist)])
    manifest.output(out)
    print(f"ranked {len(ranking)} cards -> {out}")
    return 0


def cmd_serve(args, manifest: Manifest) -> int:
    import uvicorn
    from .model import load_checkpoint
    from .service import ModelRegistry, create_app
    db, vectorizer = _vectorizer(args, manifest)
    ckpt = _resolve(args.ckpt)
    manifest.input(ckpt)
    model = load_checkpoint(ckpt, expect_config_hash=vectorizer.config_hash)
    registry = ModelRegistry(db)
    registry.add(args.model_id, model, vectorizer)
    state_dir = _resolve(args.state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)
    app = create_app(registry, state_dir,
                     static_dir=_resolve(args.static_dir) if args.static_dir else None)
    manifest.write()
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_config(args, manifest: Manifest) -> int:
    from .model import ModelConfig
    from .training import TrainingConfig
    config = _load_repr(args, manifest)
    defaults = {
        "representation": config.to_dict(),
        "representation_hash": config.config_hash,
        "training": TrainingConfig().__dict__,
        "model": ModelConfig(input_dim=config.total_dim,
                             config_hash=config.config_hash).to_dict(),
    }
    print(json.dumps(defaults, indent=1, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_repr_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cards", required=True, help="canonical card DB (JSON array)")
    p.add_argument("--repr", help="representation config JSON (default: features)")
    p.add_argument("--meta", help="meta statistics CSV")
    p.add_argument("--meta-schema", help="JSON map of stat name -> CSV header")
    p.add_argument("--text-vectors", help="precomputed text vectors (JSONL)")
    p.add_argument("--image-latents", help="precomputed image latents (JSONL)")


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--picks", required=True, help="canonical picks JSONL")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--eval-picks", help="held-out picks for per-epoch top-1")
    p.add_argument("--history", help="write per-epoch history CSV here")
    p.add_argument("--model-config", help="JSON overrides for the architecture")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Draft-pick recommendation engine over a learned "
                    "card/deck embedding space.")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert pick logs to canonical JSONL")
    p.add_argument("--cards", required=True)
    p.add_argument("--picks", required=True)
    p.add_argument("--format", choices=("wide", "jsonl"), default="wide")
    p.add_argument("--out", required=True)
    p.add_argument("--pack-prefix", default="pack_card_")
    p.add_argument("--pool-prefix", default="pool_")
    p.add_argument("--zero-indexed", action="store_true")
    p.add_argument("--draft-column", default="draft_id")
    p.add_argument("--pack-number-column", default="pack_number")
    p.add_argument("--pick-number-column", default="pick_number")
    p.add_argument("--pick-column", default="pick")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("split", help="draft-grouped train/test split")
    p.add_argument("--picks", required=True)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model on pick events")
    _add_repr_source_flags(p)
    _add_training_flags(p)
    p.add_argument("--warm-start", help="initialize from this checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="continue training from a checkpoint")
    p.add_argument("--base", required=True, help="pre-trained checkpoint")
    _add_repr_source_flags(p)
    _add_training_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="top-1 accuracy report")
    _add_repr_source_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--picks", required=True)
    p.add_argument("--report", required=True, help="JSON report output")
    p.add_argument("--matrix", help="3x15 accuracy matrix CSV output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("autoencoder-train", help="train the image autoencoder")
    p.add_argument("--images", required=True, help="directory of PNG/PPM images")
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=3e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_autoencoder_train)

    p = sub.add_parser("encode", help="encode images to latent vectors")
    p.add_argument("--autoencoder", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True, help="latents JSONL (card_id = file stem)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("export-embeddings", help="dump card embeddings")
    _add_repr_source_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", help="restrict to one set code")
    p.add_argument("--include-empty-deck", action="store_true")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("project", help="2-D projection of exported embeddings")
    p.add_argument("--embeddings", required=True, help="embeddings CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("strength", help="empty-deck strength ranking")
    _add_repr_source_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", help="restrict to one set code")
    p.set_defaults(func=cmd_strength)

    p = sub.add_parser("serve", help="run the draft HTTP service")
    _add_repr_source_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--model-id", default="default")
    p.add_argument("--state-dir", default="./draftrank-state")
    p.add_argument("--static-dir", help="serve a UI build from this directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("config", help="print effective defaults")
    p.add_argument("action", choices=("show",))
    p.add_argument("--repr", help="representation config JSON")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # two-phase parse: --config supplies defaults, explicit flags win
    probe, _ = parser.parse_known_args(argv) if argv else (None, None)
    if probe is not None and getattr(probe, "config", None):
        overrides = json.loads(Path(_resolve(probe.config)).read_text(encoding="utf-8"))
        for action in parser._subparsers._group_actions:  # noqa: SLF001
            for sub_parser in action.choices.values():
                known = {a.dest for a in sub_parser._actions}  # noqa: SLF001
                sub_parser.set_defaults(
                    **{k: v for k, v in overrides.items() if k in known})
    args = parser.parse_args(argv)
    manifest = Manifest(args.command, argv)
    try:
        code = args.func(args, manifest)
    except Exception as exc:  # noqa: BLE001 - single CLI boundary
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    if args.command != "serve":
        manifest.write()
    return code


if __name__ == "__main__":
    sys.exit(main())
