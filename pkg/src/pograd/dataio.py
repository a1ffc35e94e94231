"""Dataset container and canonical JSON serialization.

Schema ``pograd-dataset-1``: item names, traces (sorted choice_set, order,
split tag), an optional ground-truth closure matrix, and an optional meta
object.  Files are written atomically (temp + rename) in a canonical form
that round-trips byte-identically.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .hardlik import Trace
from .poset import PartialOrder

DATASET_SCHEMA = "pograd-dataset-1"
SPLITS = ("train", "test")


class DataError(ValueError):
    """Dataset file or payload violates the schema."""


@dataclass
class Dataset:
    """Observed traces over a named item universe, with split tags."""

    items: list[str]
    traces: list[Trace]
    splits: list[str]
    ground_truth: PartialOrder | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.items)
        if len(set(self.items)) != n or n == 0:
            raise DataError("items must be a nonempty list of distinct names")
        if len(self.splits) != len(self.traces):
            raise DataError("one split tag required per trace")
        for k, (tr, sp) in enumerate(zip(self.traces, self.splits)):
            if sp not in SPLITS:
                raise DataError(f"trace {k}: unknown split tag {sp!r}")
            if tr.choice_set and tr.choice_set[-1] >= n:
                raise DataError(f"trace {k}: item index {tr.choice_set[-1]} "
                                f"outside universe of {n} items")
        if self.ground_truth is not None:
            if self.ground_truth.n_items != n:
                raise DataError("ground_truth_closure size does not match items")
            if not self.ground_truth.is_closure:
                self.ground_truth = PartialOrder(self.ground_truth.precedes,
                                                 is_closure=True)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def train_traces(self) -> list[Trace]:
        return [t for t, s in zip(self.traces, self.splits) if s == "train"]

    def test_traces(self) -> list[Trace]:
        return [t for t, s in zip(self.traces, self.splits) if s == "test"]


def dataset_to_payload(ds: Dataset) -> dict:
    payload = {
        "schema": DATASET_SCHEMA,
        "items": list(ds.items),
        "traces": [
            {"choice_set": list(t.choice_set), "order": list(t.order), "split": s}
            for t, s in zip(ds.traces, ds.splits)
        ],
    }
    if ds.ground_truth is not None:
        payload["ground_truth_closure"] = \
            ds.ground_truth.precedes.astype(int).tolist()
    if ds.meta:
        payload["meta"] = ds.meta
    return payload


def dataset_from_payload(payload: dict) -> Dataset:
    if not isinstance(payload, dict):
        raise DataError("dataset payload must be a JSON object")
    if payload.get("schema") != DATASET_SCHEMA:
        raise DataError(f"unsupported dataset schema {payload.get('schema')!r}, "
                        f"expected {DATASET_SCHEMA!r}")
    try:
        items = [str(x) for x in payload["items"]]
        raw_traces = payload["traces"]
    except KeyError as e:
        raise DataError(f"dataset payload missing required key {e}") from None
    traces, splits = [], []
    for k, rt in enumerate(raw_traces):
        try:
            traces.append(Trace(choice_set=rt["choice_set"], order=rt["order"]))
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"trace {k}: {e}") from None
        splits.append(rt.get("split", "train"))
    truth = None
    if payload.get("ground_truth_closure") is not None:
        try:
            truth = PartialOrder(np.asarray(payload["ground_truth_closure"],
                                            dtype=bool), is_closure=True)
        except ValueError as e:
            raise DataError(f"ground_truth_closure: {e}") from None
    return Dataset(items=items, traces=traces, splits=splits,
                   ground_truth=truth, meta=payload.get("meta", {}))


def save_dataset(ds: Dataset, path: str) -> None:
    atomic_write_json(dataset_to_payload(ds), path)


def load_dataset(path: str) -> Dataset:
    try:
        with open(path) as f:
            payload = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read dataset file {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"dataset file {path} is not valid JSON: {e}") from None
    return dataset_from_payload(payload)


def atomic_write_json(payload, path: str) -> None:
    """Serialize to a temp file in the target directory, then rename over."""
    atomic_write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n", path)


def atomic_write_text(text: str, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
