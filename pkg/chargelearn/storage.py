"""JSONL stores for measurement records and decoder results."""
from __future__ import annotations

from collections.abc import Iterable, Iterator
import csv
import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Any

import voluptuous as vol

from .config import RECORD_SCHEMA, RESULT_SCHEMA
from .const import FORMAT_VERSION
from .core import build_layout
from .exceptions import ChargeLearnError, CorruptedRecord, InvalidArgument, StorageError
from .models import (
    BiasMode,
    CircuitRealization,
    ClassificationOutcome,
    DecodeResult,
    GateParams,
    InitKind,
    MeasurementEvent,
    MeasurementRecord,
)

_LOGGER = logging.getLogger(__name__)


def _dumps(data: dict[str, Any]) -> str:
    # repr-based float output round-trips exactly
    return json.dumps(data, separators=(",", ":"), allow_nan=False)


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    try:
        with Path(path).open("rb") as handle:
            for chunk in iter(lambda: handle.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as ex:
        raise StorageError(f"Cannot hash {path}: {ex}") from ex
    return digest.hexdigest()


def record_to_dict(record: MeasurementRecord) -> dict[str, Any]:
    data: dict[str, Any] = {
        "version": FORMAT_VERSION,
        "seed": record.record_seed,
        "L": record.n_sites,
        "tf": record.layout.n_timesteps,
        "p": record.p,
        "init": str(record.init_kind),
        "label": record.true_label,
        "events": [[event.half_layer, event.site, event.outcome] for event in record.events],
    }
    if record.gates is not None:
        data["gates"] = [
            [tau, left, gate.alpha, gate.rho, gate.psi, gate.chi, gate.xi]
            for (tau, left), gate in sorted(record.gates.gates.items())
        ]
    return data


def record_from_dict(data: dict[str, Any]) -> MeasurementRecord:
    data = RECORD_SCHEMA(data)
    layout = build_layout(data["L"], data["tf"])
    gates = None
    if "gates" in data:
        gates = CircuitRealization(
            layout=layout,
            gates={(row[0], row[1]): GateParams(*row[2:]) for row in data["gates"]},
            master_seed=data["seed"],
        )
    return MeasurementRecord(
        layout=layout,
        events=tuple(MeasurementEvent(*row) for row in data["events"]),
        init_kind=InitKind.parse(data["init"]),
        true_label=data["label"],
        record_seed=data["seed"],
        gates=gates,
        p=data["p"],
    )


def result_to_dict(result: DecodeResult) -> dict[str, Any]:
    outcome = result.outcome
    return {
        "version": FORMAT_VERSION,
        "seed": result.record_seed,
        "L": result.n_sites,
        "tf": result.n_timesteps,
        "p": result.p,
        "init": str(result.init_kind),
        "task": result.task,
        "mode": str(outcome.bias_mode),
        "backend": outcome.backend,
        "labels": list(outcome.labels),
        "log_likelihoods": [value if math.isfinite(value) else None for value in outcome.log_likelihoods],
        "posterior": list(outcome.posterior),
        "predicted": outcome.predicted_label,
        "label": outcome.true_label,
        "p_corr": outcome.p_corr,
        "entropy_bits": outcome.entropy_bits,
        "naive": result.naive_label,
    }


def result_from_dict(data: dict[str, Any]) -> DecodeResult:
    data = RESULT_SCHEMA(data)
    if not len(data["labels"]) == len(data["posterior"]) == len(data["log_likelihoods"]):
        raise InvalidArgument("labels, posterior and log_likelihoods differ in length")
    outcome = ClassificationOutcome(
        labels=data["labels"],
        log_likelihoods=[-math.inf if value is None else value for value in data["log_likelihoods"]],
        posterior=data["posterior"],
        predicted_label=data["predicted"],
        bias_mode=BiasMode(data["mode"]),
        backend=data["backend"],
        true_label=data["label"],
        p_corr=data["p_corr"],
        entropy_bits=data["entropy_bits"],
    )
    return DecodeResult(
        record_seed=data["seed"],
        n_sites=data["L"],
        n_timesteps=data["tf"],
        p=data["p"],
        init_kind=InitKind.parse(data["init"]),
        task=data["task"],
        outcome=outcome,
        naive_label=data.get("naive"),
    )


class JsonlStore:
    """One JSON object per line; writes go to a sibling temp file and are renamed into place."""

    kind = "line"

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def _decode(self, data: dict[str, Any]) -> Any:
        raise NotImplementedError

    def _encode(self, item: Any) -> dict[str, Any]:
        raise NotImplementedError

    def iter_load(self) -> Iterator[Any]:
        try:
            handle = self.path.open("r", encoding="utf-8")
        except OSError as ex:
            raise StorageError(f"Cannot open {self.path}: {ex}") from ex
        with handle:
            for number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    yield self._decode(json.loads(line))
                except json.JSONDecodeError as ex:
                    raise CorruptedRecord(f"{self.path}:{number}: not JSON ({ex.msg})") from ex
                except CorruptedRecord:
                    raise
                except (vol.Invalid, ChargeLearnError, ValueError, TypeError, KeyError) as ex:
                    raise CorruptedRecord(f"{self.path}:{number}: invalid {self.kind}: {ex}") from ex

    def load(self) -> list[Any]:
        items = list(self.iter_load())
        _LOGGER.debug("Loaded %d %ss from %s", len(items), self.kind, self.path)
        return items

    def save(self, items: Iterable[Any]) -> int:
        """Write every item; returns the count."""
        temp = self.path.with_name(self.path.name + ".tmp")
        count = 0
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with temp.open("w", encoding="utf-8", newline="\n") as handle:
                for item in items:
                    handle.write(_dumps(self._encode(item)))
                    handle.write("\n")
                    count += 1
            os.replace(temp, self.path)
        except OSError as ex:
            raise StorageError(f"Cannot write {self.path}: {ex}") from ex
        _LOGGER.debug("Saved %d %ss to %s", count, self.kind, self.path)
        return count


class RecordStore(JsonlStore):
    kind = "record"

    def _decode(self, data: dict[str, Any]) -> MeasurementRecord:
        return record_from_dict(data)

    def _encode(self, item: MeasurementRecord) -> dict[str, Any]:
        return record_to_dict(item)


class ResultStore(JsonlStore):
    kind = "result"

    def _decode(self, data: dict[str, Any]) -> DecodeResult:
        return result_from_dict(data)

    def _encode(self, item: DecodeResult) -> dict[str, Any]:
        return result_to_dict(item)


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return value


def write_csv(path: str | Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    """Fixed-header CSV with '\\n' line endings; None and NaN become empty cells."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(value) for value in row])
    except OSError as ex:
        raise StorageError(f"Cannot write {path}: {ex}") from ex


def read_csv(path: str | Path) -> list[dict[str, str]]:
    try:
        with Path(path).open("r", encoding="utf-8", newline="") as handle:
            return list(csv.DictReader(handle))
    except OSError as ex:
        raise StorageError(f"Cannot read {path}: {ex}") from ex


def write_json(path: str | Path, data: dict[str, Any]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as ex:
        raise StorageError(f"Cannot write {path}: {ex}") from ex


def read_json(path: str | Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as ex:
        raise StorageError(f"Cannot read {path}: {ex}") from ex
    except json.JSONDecodeError as ex:
        raise CorruptedRecord(f"{path}: not JSON ({ex.msg})") from ex
