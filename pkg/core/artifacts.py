#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Output Artifacts
ملفات المخرجات

Deterministic JSON writers, provenance sidecars for CSV / JSON-lines files
and the exclusive output-directory lock.
"""

import json
import logging
import os
from typing import Any, Dict, Mapping, Optional

from .errors import OutputLockedError

logger = logging.getLogger(__name__)

LOCK_NAME = ".tcnet.lock"
SIDECAR_SUFFIX = ".provenance.json"


def dumps(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False, separators=(",", ": ")) + "\n"


def _ensure_parent(path: str):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_json(path: str, document: Mapping[str, Any], provenance: Optional[Mapping[str, Any]] = None):
    """Write a JSON artifact with its provenance block embedded."""
    body = dict(document)
    if provenance is not None:
        body["provenance"] = dict(provenance)
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(body))
    logger.info(f"Wrote {path}")


def write_sidecar(path: str, provenance: Mapping[str, Any], extra: Optional[Mapping[str, Any]] = None) -> str:
    """Provenance for a non-JSON artifact, next to it as <file>.provenance.json."""
    sidecar = path + SIDECAR_SUFFIX
    body: Dict[str, Any] = dict(provenance)
    body.update(extra or {})
    _ensure_parent(sidecar)
    with open(sidecar, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(body))
    return sidecar


def read_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


class OutputLock:
    """Exclusive lock on an output directory for the duration of a command."""

    def __init__(self, directory: str):
        self.directory = directory
        self.path = os.path.join(directory, LOCK_NAME)
        self._held = False

    def __enter__(self) -> "OutputLock":
        os.makedirs(self.directory, exist_ok=True)
        try:
            with open(self.path, "x", encoding="utf-8") as f:
                f.write(f"{os.getpid()}\n")
        except FileExistsError:
            raise OutputLockedError(f"Output directory {self.directory} is locked ({self.path} exists)") from None
        self._held = True
        return self

    def __exit__(self, exc_type, exc, tb):
        if self._held:
            try:
                os.remove(self.path)
            except OSError as e:
                logger.warning(f"Could not remove lock {self.path}: {e}")
            self._held = False
        return False
