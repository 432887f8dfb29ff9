"""Command-line pipeline: generate, build, featurize, pretrain, train, eval.

Exit codes: 0 success, 1 operational failure (structured message on stderr),
2 configuration-schema violation.  The config file is a flat ``key = value``
text document; unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import InvariantEncoder
from .features import (ATOM_ENCODER_INPUT, SURFACE_ENCODER_INPUT, FileEmbeddings,
                       StubEmbeddings)
from .hierarchy import LEVEL_NAMES, build_hierarchy, load_hierarchy, save_hierarchy
from .network import LEVEL_INDEX, MultiscaleNet
from .pretrain import PretrainConfig, pretrain_encoder, synthetic_pretrain_data
from .structure import parse_mesh, parse_pdb, write_mesh, write_pdb
from .train import (Example, TrainConfig, evaluate, make_composition_dataset,
                    prepare_example, train)


class ConfigError(ValueError):
    """Config-file schema violation (exit code 2)."""


_CONFIG_TYPES = {
    "lr": float, "weight_decay": float, "batch_size": int, "max_epochs": int,
    "early_stop_patience": int, "warmup_epochs": int, "warmup_start_frac": float,
    "plateau_factor": float, "plateau_patience": int, "clip_norm": float,
    "hidden_dim": int, "n_layers": int, "dropout": float, "head_hidden": int,
    "seed": int, "task_kind": str, "out_dim": int, "readout": str,
    "readout_level": str, "ablate": str, "val_fraction": float,
}
_TASK_KINDS = ("multiclass", "multilabel", "node_binary")


def _level_index(name: str) -> int:
    key = name.strip().lower()
    if key in LEVEL_INDEX:
        return LEVEL_INDEX[key]
    raise ConfigError(f"unknown level {name!r}; expected one of {LEVEL_NAMES}")


def parse_config_file(path: str | Path) -> tuple[TrainConfig, float]:
    """Read the flat key=value config; returns (TrainConfig, val_fraction)."""
    values: dict[str, object] = {}
    val_fraction = 0.2
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        try:
            parsed = _CONFIG_TYPES[key](value)
        except ValueError:
            raise ConfigError(f"line {line_no}: bad value for {key!r}: {value!r}") from None
        if key == "task_kind" and parsed not in _TASK_KINDS:
            raise ConfigError(f"line {line_no}: unknown task_kind {parsed!r}; "
                              f"expected one of {_TASK_KINDS}")
        if key == "readout" and parsed not in ("fixed", "cross_attention"):
            raise ConfigError(f"line {line_no}: unknown readout {parsed!r}")
        if key == "readout_level":
            parsed = _level_index(parsed)
        if key == "ablate":
            parsed = tuple(_level_index(tok) for tok in str(parsed).split(",") if tok.strip())
        if key == "val_fraction":
            val_fraction = float(parsed)
            continue
        values[key] = parsed
    try:
        config = TrainConfig(**values)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return config, val_fraction


def _apply_overrides(config: TrainConfig, args) -> TrainConfig:
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "level", None):
        config.readout_level = _level_index(args.level)
    if getattr(args, "ablate", None):
        config.ablate = tuple(sorted({_level_index(a) for a in args.ablate}))
    config.validate()
    return config


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- datasets
def _load_labels(path: Path, task_kind: str) -> dict[str, object]:
    labels: dict[str, object] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        pid, _, value = line.partition("\t") if "\t" in line else line.partition(" ")
        value = value.strip()
        if not pid or not value:
            raise ValueError(f"{path}:{line_no}: expected '<id> <label>'")
        if task_kind == "multiclass":
            labels[pid] = int(value)
        elif task_kind == "multilabel":
            labels[pid] = np.array([float(v) for v in value.split(",")])
        else:
            labels[pid] = np.array([float(ch) for ch in value])
    return labels


def _load_examples(data_dir: Path, task_kind: str) -> list[Example]:
    labels = _load_labels(data_dir / "labels.tsv", task_kind)
    examples = []
    for pid in sorted(labels):
        hier_path = data_dir / f"{pid}.hier.json"
        if not hier_path.exists():
            raise FileNotFoundError(f"missing hierarchy file {hier_path}")
        h = load_hierarchy(hier_path)
        if h.features is None:
            raise ValueError(f"{hier_path}: no features attached; run featurize first")
        examples.append(Example(pid=pid, hierarchy=h, features=h.features,
                                label=labels[pid]))
    if not examples:
        raise ValueError(f"no labeled hierarchies under {data_dir}")
    return examples


def _split(examples: list[Example], val_fraction: float,
           seed: int) -> tuple[list[Example], list[Example]]:
    order = np.random.default_rng((seed, 777)).permutation(len(examples))
    n_val = max(1, round(val_fraction * len(examples)))
    if n_val >= len(examples):
        raise ValueError("validation split would consume the whole dataset")
    val_ids = set(order[:n_val].tolist())
    train_set = [ex for i, ex in enumerate(examples) if i not in val_ids]
    val_set = [ex for i, ex in enumerate(examples) if i in val_ids]
    return train_set, val_set


def _load_encoder(path: str | None, input_dim: int, seed: int) -> InvariantEncoder:
    if path is None:
        return InvariantEncoder(input_dim, seed=seed)
    arrays, meta = load_checkpoint(path)
    enc = InvariantEncoder.from_meta(meta)
    if enc.input_dim != input_dim:
        raise ValueError(f"{path}: encoder input_dim {enc.input_dim}, expected {input_dim}")
    enc.load_state(arrays)
    return enc


def _write_metrics(path: Path, rows: list[tuple[str, dict[str, float]]]) -> None:
    metric_names = sorted({k for _, scores in rows for k in scores})
    lines = ["split\t" + "\t".join(metric_names)]
    for split, scores in rows:
        lines.append(split + "\t" + "\t".join(
            _fmt(scores[m]) if m in scores else "-" for m in metric_names))
    path.write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------- subcommands
def _cmd_gen_synthetic(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = make_composition_dataset(seed=args.seed, count=args.count,
                                    n_classes=args.classes, residues=args.residues)
    label_lines = []
    for structure, mesh, label in data:
        (out / f"{structure.id}.pdb").write_text(write_pdb(structure))
        (out / f"{structure.id}.off").write_text(write_mesh(mesh))
        label_lines.append(f"{structure.id}\t{label}")
    (out / "labels.tsv").write_text("\n".join(label_lines) + "\n")
    print(f"wrote {len(data)} proteins to {out}")
    return 0


def _cmd_build(args) -> int:
    data_dir, out = Path(args.data), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pdb_files = sorted(data_dir.glob("*.pdb"))
    if not pdb_files:
        raise FileNotFoundError(f"no .pdb files under {data_dir}")
    for pdb_path in pdb_files:
        mesh_path = pdb_path.with_suffix(".off")
        if not mesh_path.exists():
            raise FileNotFoundError(f"no mesh next to {pdb_path}")
        structure = parse_pdb(pdb_path.read_text(), structure_id=pdb_path.stem)
        mesh, _ = parse_mesh(mesh_path.read_text())
        h = build_hierarchy(structure, mesh, seed=args.seed,
                            face_cap=args.face_cap, atom_cap=args.atom_cap)
        save_hierarchy(h, out / f"{pdb_path.stem}.hier.json")
    print(f"built {len(pdb_files)} hierarchies into {out}")
    return 0


def _cmd_featurize(args) -> int:
    from .features import compute_features
    data_dir, build_dir, out = Path(args.data), Path(args.build), Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    surface_enc = _load_encoder(args.surface_encoder, SURFACE_ENCODER_INPUT,
                                seed=args.seed)
    atom_enc = _load_encoder(args.atom_encoder, ATOM_ENCODER_INPUT,
                             seed=args.seed + 1)
    source = FileEmbeddings(args.embeddings) if args.embeddings else StubEmbeddings()
    hier_files = sorted(build_dir.glob("*.hier.json"))
    if not hier_files:
        raise FileNotFoundError(f"no hierarchy files under {build_dir}")
    for hier_path in hier_files:
        pid = hier_path.name.removesuffix(".hier.json")
        h = load_hierarchy(hier_path)
        structure = parse_pdb((data_dir / f"{pid}.pdb").read_text(), structure_id=pid)
        h.features = compute_features(structure, h, surface_enc, atom_enc, source)
        save_hierarchy(h, out / hier_path.name)
    labels = data_dir / "labels.tsv"
    if labels.exists():  # carry labels along so the output dir is train-ready
        (out / "labels.tsv").write_text(labels.read_text())
    print(f"featurized {len(hier_files)} hierarchies into {out}")
    return 0


def _cmd_pretrain_encoder(args) -> int:
    kind = args.target
    data = synthetic_pretrain_data(args.count, seed=args.seed, kind=kind)
    config = PretrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                            lr=args.lr, seed=args.seed, hidden=args.hidden,
                            depth=args.depth)
    result = pretrain_encoder(config, data)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, result.encoder.state_arrays(), result.encoder.meta())
    best = result.best_val_loss if result.history else float("nan")
    print(f"pretrained {kind} encoder on {args.count} proteins "
          f"({args.epochs} epochs); best val loss {best:.6f}; saved {out}")
    return 0


def _cmd_train(args) -> int:
    config, val_fraction = parse_config_file(args.config)
    config = _apply_overrides(config, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    examples = _load_examples(Path(args.data), config.task_kind)
    train_set, val_set = _split(examples, val_fraction, config.seed)
    result = train(config, train_set, val_set)
    save_checkpoint(out / "checkpoint.npz", result.best_state,
                    {"config": vars(config) | {"ablate": list(config.ablate)}})
    rows = [("train", evaluate(result.net, config, train_set)),
            ("val", evaluate(result.net, config, val_set))]
    _write_metrics(out / "metrics.txt", rows)
    history_lines = ["epoch\tlr\ttrain_loss\tval_loss\tval_metric"]
    for h in result.history:
        history_lines.append("\t".join([str(h["epoch"]), _fmt(h["lr"]),
                                        _fmt(h["train_loss"]), _fmt(h["val_loss"]),
                                        _fmt(h["val_metric"])]))
    (out / "history.txt").write_text("\n".join(history_lines) + "\n")
    print(f"trained {len(result.history)} epochs; best epoch {result.best_epoch} "
          f"({config.metric_name} {result.best_metric:.4f}); outputs in {out}")
    return 0


def _restore_net(checkpoint_path: str) -> tuple[MultiscaleNet, TrainConfig]:
    arrays, meta = load_checkpoint(checkpoint_path)
    cfg_dict = dict(meta["config"])
    cfg_dict["ablate"] = tuple(cfg_dict.get("ablate", ()))
    config = TrainConfig(**cfg_dict)
    net = MultiscaleNet(config.net_config())
    net.load_state(arrays)
    return net, config


def _cmd_eval(args) -> int:
    net, config = _restore_net(args.checkpoint)
    examples = _load_examples(Path(args.data), config.task_kind)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics(out / "metrics.txt", [("eval", evaluate(net, config, examples))])
    print(f"evaluated {len(examples)} proteins; metrics in {out / 'metrics.txt'}")
    return 0


def _cmd_report_attn(args) -> int:
    net, config = _restore_net(args.checkpoint)
    if config.readout != "cross_attention":
        raise ValueError("checkpoint was not trained with the cross_attention readout")
    examples = _load_examples(Path(args.data), config.task_kind)
    lines = ["id\t" + "\t".join(LEVEL_NAMES)]
    for ex in examples:
        _, weights = net.predict(ex.hierarchy, ex.features, train=False)
        lines.append(ex.pid + "\t" + "\t".join(_fmt(w) for w in weights))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote attention report for {len(examples)} proteins to {out}")
    return 0


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierprot",
        description="Multiscale hierarchical graph networks over protein structures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--residues", type=int, default=48)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("build", help="PDB + mesh files -> hierarchy containers")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--face-cap", type=int, default=1024)
    p.add_argument("--atom-cap", type=int, default=2048)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("featurize", help="attach per-level features to hierarchies")
    p.add_argument("--data", required=True, help="directory with the .pdb files")
    p.add_argument("--build", required=True, help="directory with .hier.json files")
    p.add_argument("--out", required=True)
    p.add_argument("--surface-encoder", help="encoder checkpoint (.npz)")
    p.add_argument("--atom-encoder", help="encoder checkpoint (.npz)")
    p.add_argument("--embeddings", help="sidecar embedding table (stub if absent)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("pretrain-encoder", help="denoising pretraining on synthetic data")
    p.add_argument("--target", choices=("surface", "atom"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_pretrain_encoder)

    p = sub.add_parser("train", help="train on featurized hierarchies")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--level", help="readout level override")
    p.add_argument("--ablate", action="append", help="level to bypass (repeatable)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report-attn", help="per-protein cross-attention weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report_attn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # operational failure: structured message, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
