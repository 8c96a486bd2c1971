"""Durable artifacts: checkpoints, embedding exports, history and reports.

Every writer lands atomically: content goes to a temporary file in the
destination directory which is renamed into place only on success, so a
crash never leaves a partial artifact under the final name.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Iterator

import numpy as np

from .baselines import (
    RotateModel,
    RotateParams,
    TransEModel,
    TransEParams,
    init_rotate,
    init_transe,
)
from .kg import Vocabulary
from .scoring import RelateModel, RelateParams, ScoreModel, TypeContext, init_relate

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file that cannot be understood."""


@contextmanager
def atomic_write(path: str | Path, mode: str = "w") -> Iterator[IO]:
    """Write to a sibling temp file, rename over ``path`` on clean exit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, mode, encoding=None if "b" in mode else "utf-8") as fh:
            yield fh
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def write_json(path: str | Path, payload: Any) -> None:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    with atomic_write(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model_factory(
    kind: str, n_entities: int, n_relations: int, dim: int, gamma: float, seed: int
) -> ScoreModel:
    if kind == "relate":
        return RelateModel(
            init_relate(n_entities, n_relations, dim, seed=seed, gamma=gamma)
        )
    if kind == "transe":
        return TransEModel(init_transe(n_entities, n_relations, dim, seed=seed, gamma=gamma))
    if kind == "rotate":
        return RotateModel(init_rotate(n_entities, n_relations, dim, seed=seed, gamma=gamma))
    raise CheckpointError(f"unknown model kind {kind!r}")


def build_model(
    kind: str, n_entities: int, n_relations: int, dim: int, *, gamma: float, seed: int
) -> ScoreModel:
    """Freshly initialized model of the named kind."""
    return _model_factory(kind, n_entities, n_relations, dim, gamma, seed)


def save_checkpoint(
    path: str | Path,
    model: ScoreModel,
    vocab: Vocabulary,
    extra_meta: dict[str, Any] | None = None,
) -> None:
    """Versioned npz container with tensors, vocabulary and metadata.

    Float64 tensors are stored in binary, so a load round-trips bitwise.
    """
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": model.kind,
        "gamma": model.gamma,
        "dim": model.dim,
        "n_entities": model.n_entities,
        "n_relations": model.n_relations,
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays: dict[str, np.ndarray] = {
        "meta_json": np.array(json.dumps(meta, sort_keys=True)),
        "entity_names": np.array(vocab.entity_names, dtype=np.str_),
        "relation_names": np.array(vocab.relation_names, dtype=np.str_),
    }
    for name, tensor in model.tensors().items():
        arrays[f"tensor__{name}"] = tensor
    if isinstance(model, RelateModel) and model.type_context is not None:
        arrays["type_signatures"] = model.type_context.signatures
        arrays["type_state"] = np.array(
            [model.type_context.type_lambda, model.type_context.warm]
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def load_checkpoint(path: str | Path) -> tuple[ScoreModel, Vocabulary, dict[str, Any]]:
    with np.load(path, allow_pickle=False) as data:
        if "meta_json" not in data:
            raise CheckpointError(f"{path}: not a model checkpoint")
        meta = json.loads(str(data["meta_json"]))
        version = meta.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint format version {version!r}"
            )
        vocab = Vocabulary(
            tuple(str(n) for n in data["entity_names"]),
            tuple(str(n) for n in data["relation_names"]),
        )
        tensors = {
            name[len("tensor__") :]: np.array(data[name])
            for name in data.files
            if name.startswith("tensor__")
        }
        kind = meta["kind"]
        gamma = float(meta["gamma"])
        dim = int(meta["dim"])
        if kind == "relate":
            params = RelateParams(gamma=gamma, dim=dim, **tensors)
            ctx = None
            if "type_signatures" in data.files:
                lam, warm = (float(x) for x in data["type_state"])
                ctx = TypeContext(np.array(data["type_signatures"]), lam, warm)
            model: ScoreModel = RelateModel(params, ctx)
        elif kind == "transe":
            params_t = TransEParams(gamma=gamma, dim=dim, **tensors)
            model = TransEModel(params_t)
        elif kind == "rotate":
            params_r = RotateParams(gamma=gamma, dim=dim, **tensors)
            model = RotateModel(params_r)
        else:
            raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    return model, vocab, meta


def _fmt(value: float) -> str:
    # 17 significant digits round-trip any float64 exactly
    return format(float(value), ".17g")


def export_embeddings(model: ScoreModel, vocab: Vocabulary, path: str | Path) -> None:
    """One CSV row per entity with a header naming every column.

    The phase-modulus model emits name, d/2 phase then d/2 modulus columns;
    the baselines emit their raw coordinate layout.
    """
    with atomic_write(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if isinstance(model, RelateModel):
            k = model.params.half_dim
            writer.writerow(
                ["name"]
                + [f"phase_{i}" for i in range(k)]
                + [f"mod_{i}" for i in range(k)]
            )
            for idx, name in enumerate(vocab.entity_names):
                writer.writerow(
                    [name]
                    + [_fmt(v) for v in model.params.entity_phase[idx]]
                    + [_fmt(v) for v in model.params.entity_modulus[idx]]
                )
        elif isinstance(model, RotateModel):
            k = model.half_dim
            writer.writerow(
                ["name"]
                + [f"re_{i}" for i in range(k)]
                + [f"im_{i}" for i in range(k)]
            )
            for idx, name in enumerate(vocab.entity_names):
                writer.writerow(
                    [name] + [_fmt(v) for v in model.params.entity[idx]]
                )
        else:
            d = model.dim
            writer.writerow(["name"] + [f"v_{i}" for i in range(d)])
            for idx, name in enumerate(vocab.entity_names):
                writer.writerow(
                    [name] + [_fmt(v) for v in model.tensors()["entity"][idx]]
                )


def import_embeddings(path: str | Path) -> tuple[list[str], np.ndarray, list[str]]:
    """Read an embedding CSV back as (names, float64 matrix, column names)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names: list[str] = []
        rows: list[list[float]] = []
        for row in reader:
            names.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return names, np.array(rows, dtype=np.float64).reshape(len(names), -1), header[1:]


def write_history_csv(
    path: str | Path, history: list[dict[str, Any]], include_timing: bool = True
) -> None:
    """Training trace CSV; with timing suppressed the seconds column is
    written as 0.0 so repeated runs compare byte for byte."""
    with atomic_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss", "valid_mrr", "seconds"])
        for rec in history:
            seconds = rec["seconds"] if include_timing else 0.0
            mrr = rec["valid_mrr"]
            writer.writerow(
                [
                    rec["step"],
                    _fmt(rec["loss"]),
                    "" if mrr is None else _fmt(mrr),
                    _fmt(seconds),
                ]
            )
