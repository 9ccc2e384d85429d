"""Provenance manifest for sweep directories."""
from __future__ import annotations

from importlib import metadata
import platform
from typing import TYPE_CHECKING, Any

from .const import DOMAIN, FORMAT_VERSION

if TYPE_CHECKING:
    from .coordinator import SweepCoordinator

LIBRARIES = ("numpy", "scipy", "voluptuous", "matplotlib")


def _version(package: str) -> str | None:
    try:
        return metadata.version(package)
    except metadata.PackageNotFoundError:
        return None


def library_versions() -> dict[str, str | None]:
    return {
        "python": platform.python_version(),
        DOMAIN: _version(DOMAIN),
        **{name: _version(name) for name in LIBRARIES},
    }


def build_manifest(coordinator: SweepCoordinator) -> dict[str, Any]:
    """Return the manifest dict for a sweep."""
    plan = coordinator.plan
    cells = coordinator.cells

    total_records = sum(cell.get("statistics", {}).get("records", 0) for cell in cells.values())
    total_events = sum(cell.get("statistics", {}).get("events", 0) for cell in cells.values())
    violations = sum(cell.get("statistics", {}).get("sharpness_violations", 0) for cell in cells.values())

    return {
        "format_version": FORMAT_VERSION,
        "versions": library_versions(),
        "plan": {
            "master_seed": plan.master_seed,
            "sizes": plan.sizes,
            "rates": plan.rates,
            "modes": [str(mode) for mode in plan.modes],
            "tasks": plan.tasks,
            "records_per_class": plan.records_per_class,
            "timesteps": plan.timesteps,
            "engine": plan.engine,
            "sampler": plan.sampler,
            "init": plan.init,
            "backend": plan.backend,
            "threshold": plan.threshold,
            "boot": plan.boot,
        },
        "seeds": {name: cell.get("parameters", {}).get("seed") for name, cell in sorted(cells.items())},
        "cells": dict(sorted(cells.items())),
        "analysis": coordinator.analysis,
        "statistics": {
            "cells_total": len(plan.cells()),
            "cells_done": len(cells),
            "total_records": total_records,
            "total_events": total_events,
            "mean_events_per_record": total_events / total_records if total_records else 0.0,
            "sharpness_violations": violations,
        },
    }
