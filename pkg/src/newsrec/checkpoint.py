"""Single-file checkpoints.

A checkpoint is a zip archive (stored, not compressed) holding one ``.npy``
member per parameter, named after the parameter, plus ``meta.json``:

    format        "newsrec-checkpoint"
    version       1
    config        the run configuration that produced it
    config_hash   digest of the shape-determining keys (RunConfig.model_hash)
    epoch         epoch the parameters come from
    rng_state     training RngState after that epoch
    metrics       validation metrics at that epoch (may be empty)
    params        {name: {"dtype", "shape", "trainable"}}
    corpus        vocab / category / subcategory / user id lists and length caps

Zip entries carry a fixed timestamp, so saving the same state twice gives
identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Corpus, IdMap, Vocabulary, category_map
from .errors import CheckpointMismatch, DataError
from .tensor import ParamStore

FORMAT = "newsrec-checkpoint"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    state: dict[str, np.ndarray]
    trainable: dict[str, bool]
    config: dict
    config_hash: str
    epoch: int
    rng_state: dict
    metrics: dict
    corpus: dict

    def store(self) -> ParamStore:
        store = ParamStore()
        for name in sorted(self.state):
            store.add(name, self.state[name].copy(), requires_grad=self.trainable[name])
        return store

    def restore_corpus(self) -> Corpus:
        """Frozen id maps as they stood at training time (no articles)."""
        c = self.corpus
        corpus = Corpus(title_max=c["title_max"], abstract_max=c["abstract_max"])
        corpus.vocab = Vocabulary.from_words(c["vocab"])
        categories, subcategories = category_map(), category_map()
        corpus.categories = IdMap.from_list(c["categories"], len(categories), categories.fallback)
        corpus.subcategories = IdMap.from_list(c["subcategories"], len(subcategories),
                                               subcategories.fallback)
        corpus.users = IdMap.from_list(c["users"], 0, None)
        corpus.freeze()
        return corpus


def corpus_meta(corpus: Corpus) -> dict:
    return {"vocab": corpus.vocab.to_list(), "categories": corpus.categories.to_list(),
            "subcategories": corpus.subcategories.to_list(), "users": corpus.users.to_list(),
            "title_max": corpus.title_max, "abstract_max": corpus.abstract_max}


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_checkpoint(path, store: ParamStore, *, config: dict, config_hash: str, epoch: int,
                    rng_state: dict, metrics: dict, corpus: Corpus) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": FORMAT, "version": VERSION, "config": config, "config_hash": config_hash,
        "epoch": epoch, "rng_state": rng_state, "metrics": metrics,
        "params": {name: {"dtype": str(t.data.dtype), "shape": list(t.shape),
                          "trainable": t.requires_grad} for name, t in store.items()},
        "corpus": corpus_meta(corpus),
    }
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        zf.writestr(_member("meta.json"), json.dumps(meta, sort_keys=True, indent=1))
        for name, t in store.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(t.data), allow_pickle=False)
            zf.writestr(_member(f"params/{name}.npy"), buf.getvalue())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format") != FORMAT:
                raise CheckpointMismatch(f"{path} is not a newsrec checkpoint")
            if meta.get("version") != VERSION:
                raise CheckpointMismatch(f"{path}: unsupported checkpoint version {meta.get('version')}")
            state = {}
            for name, info in meta["params"].items():
                arr = np.lib.format.read_array(io.BytesIO(zf.read(f"params/{name}.npy")),
                                               allow_pickle=False)
                if list(arr.shape) != info["shape"] or str(arr.dtype) != info["dtype"]:
                    raise CheckpointMismatch(f"{path}: parameter {name} does not match its metadata")
                state[name] = arr
    except (zipfile.BadZipFile, KeyError, ValueError) as exc:
        raise CheckpointMismatch(f"{path}: unreadable checkpoint ({exc})") from None
    return Checkpoint(state, {n: i["trainable"] for n, i in meta["params"].items()},
                      meta["config"], meta["config_hash"], meta["epoch"], meta["rng_state"],
                      meta["metrics"], meta["corpus"])


def check_compatible(ckpt: Checkpoint, expected_hash: str, path="checkpoint") -> None:
    if ckpt.config_hash != expected_hash:
        raise CheckpointMismatch(
            f"{path}: config hash {ckpt.config_hash[:12]} does not match the current "
            f"configuration ({expected_hash[:12]}); model dimensions or switches differ")
