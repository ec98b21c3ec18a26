"""Feature-table encoding into a dense numeric matrix.

Fit statistics (means, stds, frequencies) come from the fit rows only so
that per-copy encoders in bagged training never see held-out rows.
Categorical one-hot vocabularies and the text hashing scheme are
value-independent, so encoded column layout is stable across copies.

- numeric: standardized by fit-row mean/std (population std); missing
  values imputed with the fit-row mean.
- categorical: one-hot over the table vocabulary when it has <= 32
  levels, otherwise fit-row frequency encoding (target-free).
- text: hashed bag of words into 2^14 buckets, L2-normalized per row.
"""

from __future__ import annotations

import re
import zlib

import numpy as np

from graphstack.errors import ConfigError
from graphstack.tables import FeatureTable

ONE_HOT_MAX_LEVELS = 32
TEXT_BUCKETS = 2 ** 14
_TOKEN = re.compile(r"[a-z0-9]+")


def _hash_token(token: str) -> int:
    return zlib.crc32(token.encode("utf-8")) % TEXT_BUCKETS


def _text_rows(col, rows):
    out = np.zeros((rows.shape[0], TEXT_BUCKETS))
    for i, r in enumerate(rows):
        for tok in _TOKEN.findall(str(col[r]).lower()):
            out[i, _hash_token(tok)] += 1.0
    norms = np.sqrt((out * out).sum(axis=1, keepdims=True))
    np.divide(out, norms, out=out, where=norms > 0)
    return out


class EncoderState:
    """Replayable per-column transforms fitted on a fixed row subset."""

    def __init__(self, transforms, warnings, num_output_columns):
        self.transforms = transforms
        self.warnings = tuple(warnings)
        self.num_output_columns = int(num_output_columns)

    def transform(self, table: FeatureTable, rows=None) -> np.ndarray:
        """Encode rows (default: all) exactly as at fit time."""
        if rows is None:
            rows = np.arange(table.num_rows, dtype=np.int64)
        else:
            rows = np.asarray(rows, dtype=np.int64)
        blocks = []
        for t in self.transforms:
            name, mode = t["name"], t["mode"]
            col = table.column(name)
            if mode == "numeric":
                x = col[rows].copy()
                x[~np.isfinite(x)] = t["mean"]
                blocks.append(((x - t["mean"]) / t["std"])[:, None])
            elif mode == "one_hot":
                index = t["level_index"]
                block = np.zeros((rows.shape[0], len(index)))
                for i, r in enumerate(rows):
                    j = index.get(col[r])
                    if j is not None:
                        block[i, j] = 1.0
                blocks.append(block)
            elif mode == "frequency":
                freq = t["freq"]
                blocks.append(np.asarray(
                    [freq.get(col[r], 0.0) for r in rows])[:, None])
            elif mode == "text":
                blocks.append(_text_rows(col, rows))
            else:  # pragma: no cover
                raise ConfigError(f"unknown transform mode {mode!r}")
        if not blocks:
            return np.zeros((rows.shape[0], 0))
        return np.concatenate(blocks, axis=1)

    def to_meta(self):
        return {"transforms": [dict(t) for t in self.transforms],
                "warnings": list(self.warnings),
                "num_output_columns": self.num_output_columns}

    @classmethod
    def from_meta(cls, meta):
        transforms = []
        for t in meta["transforms"]:
            t = dict(t)
            if t["mode"] == "one_hot":
                t["level_index"] = {str(k): int(v)
                                    for k, v in t["level_index"].items()}
            elif t["mode"] == "frequency":
                t["freq"] = {str(k): float(v) for k, v in t["freq"].items()}
            transforms.append(t)
        return cls(transforms, meta["warnings"], meta["num_output_columns"])


def encode_features(table: FeatureTable, fit_rows):
    """Fit an encoder on ``fit_rows`` and encode the whole table.

    Returns ``(matrix, state)`` where ``matrix`` covers all table rows
    and ``state.transform`` replays the encoding on any row subset.
    Columns that are entirely missing on the fit rows are dropped, with
    a note appended to ``state.warnings``.
    """
    fit_rows = np.asarray(fit_rows, dtype=np.int64)
    if fit_rows.size == 0:
        raise ConfigError("encode_features needs a nonempty fit row set")
    transforms = []
    warnings = []
    width = 0
    for name, kind in table.columns:
        col = table.column(name)
        if kind == "numeric":
            fit_vals = col[fit_rows]
            finite = fit_vals[np.isfinite(fit_vals)]
            if finite.size == 0:
                warnings.append(f"dropped all-missing numeric column {name!r}")
                continue
            mean = float(finite.mean())
            std = float(finite.std())
            transforms.append({"name": name, "mode": "numeric",
                               "mean": mean, "std": std if std > 0 else 1.0})
            width += 1
        elif kind == "categorical":
            vocab = table.levels(name)
            if len(vocab) <= ONE_HOT_MAX_LEVELS:
                index = {lvl: j for j, lvl in enumerate(vocab)}
                transforms.append({"name": name, "mode": "one_hot",
                                   "level_index": index})
                width += len(vocab)
            else:
                fit_vals = col[fit_rows]
                freq = {}
                for v in fit_vals:
                    freq[v] = freq.get(v, 0.0) + 1.0
                total = float(fit_rows.shape[0])
                freq = {k: v / total for k, v in freq.items()}
                transforms.append({"name": name, "mode": "frequency",
                                   "freq": freq})
                width += 1
        else:
            transforms.append({"name": name, "mode": "text"})
            width += TEXT_BUCKETS
    state = EncoderState(transforms, warnings, width)
    return state.transform(table), state
