"""Result bundle: a run directory holding the manifest, data files and any error record."""
from __future__ import annotations

import csv
import json
import logging
import traceback
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from . import __version__
from .config import echo_config
from .schemas import RunConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
ERROR_NAME = "error.json"


def format_number(value: float | int) -> str:
    """Full-precision text for CSV cells; integers stay integers."""

    if isinstance(value, bool) or not isinstance(value, float):
        return str(value)
    return format(value, ".17g")


class ResultBundle:
    """Writes one run's artifacts below ``root``.

    The manifest is written before any computation (status ``running``) and rewritten
    at the end with the final status and the list of data files. Nothing in the
    bundle depends on wall-clock time, so identical runs give identical bundles.
    """

    def __init__(self, root: str | Path) -> None:
        self._root = Path(root)
        self._files: list[str] = []
        self._manifest: dict[str, Any] = {}

    @property
    def root(self) -> Path:
        return self._root

    @property
    def files(self) -> list[str]:
        return list(self._files)

    @property
    def status(self) -> str | None:
        return self._manifest.get("status")

    def path(self, name: str) -> Path:
        return self._root / name

    def _register(self, name: str) -> Path:
        if name not in self._files:
            self._files.append(name)
        return self.path(name)

    def write_manifest(self, config: RunConfig | None, status: str = "running") -> Path:
        self._root.mkdir(parents=True, exist_ok=True)
        self._manifest = {
            "artifact": "photonic-qelm",
            "version": __version__,
            "status": status,
            "seed": config.seed if config is not None else None,
            "task": config.task.value if config is not None else None,
            "config": json.loads(echo_config(config)) if config is not None else None,
            "files": [],
        }
        return self._dump_manifest()

    def _dump_manifest(self) -> Path:
        target = self.path(MANIFEST_NAME)
        target.write_text(
            json.dumps(self._manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return target

    def finalize(self, status: str) -> Path:
        if not self._manifest:
            self.write_manifest(None, status)
        self._manifest["status"] = status
        self._manifest["files"] = sorted(self._files)
        logger.info("bundle %s finished with status %s", self._root, status)
        return self._dump_manifest()

    def write_json(self, name: str, payload: Any) -> Path:
        target = self._register(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self._register(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        return target

    def write_csv(
        self, name: str, headers: Sequence[str], rows: Iterable[Sequence[Any]]
    ) -> Path:
        target = self._register(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(headers)
            for row in rows:
                writer.writerow([format_number(v) for v in row])
        return target

    def write_error(self, exc: BaseException, *, include_traceback: bool = False) -> Path:
        record: dict[str, Any] = {"type": type(exc).__name__, "message": str(exc)}
        fields = getattr(exc, "fields", None)
        if fields:
            record["fields"] = list(fields)
        if include_traceback:
            record["traceback"] = traceback.format_exception(exc)
        self._root.mkdir(parents=True, exist_ok=True)
        return self.write_json(ERROR_NAME, record)


__all__ = ["ERROR_NAME", "MANIFEST_NAME", "ResultBundle", "format_number"]
