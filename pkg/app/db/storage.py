"""
Run-directory persistence.
Versioned array containers, ledgers and exports written under runs/<run-id>/.
"""

import hashlib
import io
import json
import shutil
import zipfile
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel

from app.core.config import get_settings
from app.core.exceptions import (
    ArtifactFormatError,
    ArtifactNotFoundError,
    SchemaVersionError,
)

logger = structlog.get_logger(__name__)

META_ENTRY = "meta.json"
_FIXED_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_FIXED_TIMESTAMP)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def write_npz(
    path: Path,
    arrays: Mapping[str, np.ndarray],
    schema: str,
    version: int,
    meta: Mapping[str, Any] | None = None,
) -> Path:
    """Write arrays plus a JSON header into a byte-stable .npz container."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"schema": schema, "schema_version": version, **(meta or {})}
    with zipfile.ZipFile(path, "w") as archive:
        archive.writestr(_entry(META_ENTRY), json.dumps(header, sort_keys=True))
        for name in sorted(arrays):
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.asarray(arrays[name]), allow_pickle=False)
            archive.writestr(_entry(f"{name}.npy"), buffer.getvalue())
    return path


def read_npz(
    path: Path, schema: str, version: int
) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read a container written by :func:`write_npz`, checking its header."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(f"artifact not found: {path}")
    try:
        with zipfile.ZipFile(path) as archive:
            header = json.loads(archive.read(META_ENTRY))
            if header.get("schema") != schema:
                raise ArtifactFormatError(
                    f"{path} holds schema {header.get('schema')!r}, expected {schema!r}"
                )
            if header.get("schema_version") != version:
                raise SchemaVersionError(
                    f"{path} has schema version {header.get('schema_version')}, "
                    f"this build reads version {version}"
                )
            arrays = {}
            for name in archive.namelist():
                if name.endswith(".npy"):
                    with archive.open(name) as handle:
                        arrays[name[:-4]] = np.lib.format.read_array(
                            handle, allow_pickle=False
                        )
    except ArtifactFormatError:
        raise
    except (zipfile.BadZipFile, EOFError, KeyError, ValueError, OSError) as exc:
        raise ArtifactFormatError(f"cannot parse {path}: {exc}") from exc
    return arrays, header


CHECKPOINT_SCHEMA = "checkpoint"
CHECKPOINT_SCHEMA_VERSION = 1


def save_checkpoint(
    path: Path, arrays: Mapping[str, np.ndarray], meta: Mapping[str, Any]
) -> Path:
    """Network weights, optimizer state and trainer progress."""
    write_npz(path, arrays, CHECKPOINT_SCHEMA, CHECKPOINT_SCHEMA_VERSION, meta)
    logger.info("Checkpoint saved", path=str(path), epoch=meta.get("epoch"))
    return Path(path)


def load_checkpoint(path: Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return read_npz(path, CHECKPOINT_SCHEMA, CHECKPOINT_SCHEMA_VERSION)


def config_digest(resolved: Mapping[str, Any]) -> str:
    """Stable hash of a resolved config."""
    payload = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def write_records(path: Path, records: Iterable[BaseModel | Mapping[str, Any]]) -> Path:
    """Write ledger rows as CSV with fixed float formatting."""
    rows = [r.model_dump() if isinstance(r, BaseModel) else dict(r) for r in records]
    frame = pd.DataFrame(rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path


def read_records(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise ArtifactNotFoundError(f"ledger not found: {path}")
    return pd.read_csv(path)


class RunDirectory:
    """Layout of one run's outputs."""

    def __init__(self, root: Path):
        self.root = Path(root)

    @classmethod
    def create(
        cls,
        command: str,
        seed: int,
        resolved_config: Mapping[str, Any],
        config_text: str,
        output_dir: str | None = None,
        reset: bool = True,
    ) -> "RunDirectory":
        """Create the deterministic run directory of a command.

        An existing directory is wiped unless ``reset`` is false (resumed runs).
        """
        base = Path(output_dir or get_settings().RUNS_DIR)
        run_id = f"{command}-{seed}-{config_digest(resolved_config)[:8]}"
        root = base / run_id
        if root.exists() and reset:
            shutil.rmtree(root)
        root.mkdir(parents=True, exist_ok=True)
        run = cls(root)
        (root / "config.toml").write_text(config_text, encoding="utf-8")
        (root / "config.resolved.json").write_text(
            json.dumps(resolved_config, sort_keys=True, indent=2), encoding="utf-8"
        )
        (root / "seed").write_text(f"{seed}\n", encoding="utf-8")
        (root / "VERSION").write_text(
            f"{get_settings().version_string}\n", encoding="utf-8"
        )
        logger.info("Run directory created", run_dir=str(root))
        return run

    @classmethod
    def open(cls, root: Path) -> "RunDirectory":
        root = Path(root)
        if not root.is_dir():
            raise ArtifactNotFoundError(f"run directory not found: {root}")
        return cls(root)

    @property
    def run_id(self) -> str:
        return self.root.name

    @property
    def scenario_path(self) -> Path:
        return self.root / "scenario.npz"

    @property
    def checkpoint_dir(self) -> Path:
        return self.root / "checkpoints"

    @property
    def metrics_path(self) -> Path:
        return self.root / "metrics.prom"

    def ledger(self, name: str) -> Path:
        return self.root / f"{name}.csv"

    def read_text(self, name: str) -> str:
        path = self.root / name
        if not path.is_file():
            raise ArtifactNotFoundError(f"missing {name} in {self.root}")
        return path.read_text(encoding="utf-8")


def export_channel(realization: Any, directory: Path) -> Path:
    """One .npy blob per UAV plus a JSON sidecar of parameters."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for u in range(realization.num_uavs):
        np.save(directory / f"uav{u}.npy", realization.tensor[u], allow_pickle=False)
    sidecar = {
        "carrier_hz": realization.carrier_hz,
        "subcarrier_spacing_hz": realization.subcarrier_spacing_hz,
        "frame": realization.frame,
        "shape": list(realization.tensor.shape[1:]),
        "layout": "subcarrier, symbol, rx, tx",
        "dtype": str(realization.tensor.dtype),
        "los_paths": [
            {
                "gain": [p.gain.real, p.gain.imag],
                "delay": p.delay,
                "doppler": p.doppler,
                "aoa": [p.aoa_az, p.aoa_el],
                "aod": [p.aod_az, p.aod_el],
            }
            for p in realization.los_paths
        ],
    }
    (directory / "channel.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8"
    )
    return directory


def export_codebook_csv(codebook: Any, path: Path) -> Path:
    """index, n_x, n_y, m, then re/im of every precoder element."""
    rows = []
    for index, (entry, label) in enumerate(zip(codebook.entries, codebook.labels, strict=True)):
        row: dict[str, Any] = {"index": index, "n_x": label[0], "n_y": label[1], "m": label[2]}
        for e, value in enumerate(entry):
            row[f"re{e}"] = value.real
            row[f"im{e}"] = value.imag
        rows.append(row)
    return write_records(Path(path), rows)


def export_bev_csv(grid: Any, path: Path) -> Path:
    """One row per cell: w, h, count, semicolon-joined ids."""
    w_cells, h_cells = grid.spec.shape
    ids = np.full(grid.spec.shape, "", dtype=object)
    for instance_id in sorted(grid.instances):
        mask = grid.instances[instance_id]
        ids[mask] = np.where(ids[mask] == "", str(instance_id), ids[mask] + f";{instance_id}")
    w, h = np.meshgrid(np.arange(w_cells), np.arange(h_cells), indexing="ij")
    frame = pd.DataFrame(
        {
            "w": w.ravel(),
            "h": h.ravel(),
            "count": grid.counts.ravel(),
            "ids": ids.ravel(),
        }
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return Path(path)
