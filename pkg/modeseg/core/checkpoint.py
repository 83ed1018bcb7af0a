"""Model checkpoints: a JSON manifest plus one little-endian float buffer file."""

import dataclasses
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ..config.settings import ModelSpec, NormConfig
from .exceptions import CheckpointError, ConfigurationError
from .layers import Module
from .segnets import SegModel, build_model

logger = logging.getLogger(__name__)

MANIFEST_NAME = "model.json"
BUFFER_NAME = "model.bin"
FORMAT_VERSION = 1

_DTYPE_TAGS = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}


class CheckpointEntry(BaseModel):
    name: str
    shape: List[int]
    offset: int = Field(..., ge=0)
    nbytes: int = Field(..., ge=0)
    dtype: str = Field("f32le", pattern="^f(32|64)le$")
    kind: str = Field("param", pattern="^(param|buffer)$")


class CheckpointManifest(BaseModel):
    format_version: int = FORMAT_VERSION
    spec: Dict[str, Any]
    seed: int = 0
    entries: List[CheckpointEntry] = Field(default_factory=list)
    fingerprint: str
    metadata: Dict[str, Any] = Field(default_factory=dict)

    def model_spec(self) -> ModelSpec:
        try:
            values = dict(self.spec)
            values["norm"] = NormConfig(**values.get("norm", {}))
            return ModelSpec(**values)
        except (TypeError, ConfigurationError) as e:
            raise CheckpointError(
                "Checkpoint manifest holds an invalid model spec", original_error=e
            )


def _tag(dtype: np.dtype) -> str:
    return "f64le" if np.dtype(dtype).itemsize == 8 else "f32le"


def state_fingerprint(state: Dict[str, np.ndarray]) -> str:
    """SHA-256 over entry names and their little-endian bytes, in order."""
    digest = hashlib.sha256()
    for name, value in state.items():
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(value, dtype=value.dtype.newbyteorder("<")).tobytes())
    return digest.hexdigest()


def weights_fingerprint(model: Module) -> str:
    """Fingerprint of the model's current parameters and buffers."""
    return state_fingerprint(model.state_dict())


def save_checkpoint(
    model: SegModel, directory: Union[str, Path], metadata: Optional[Dict[str, Any]] = None
) -> Path:
    """Write model.json and model.bin into ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    param_names = {name for name, _ in model.named_parameters()}
    entries = []
    chunks = []
    offset = 0
    for name, value in model.state_dict().items():
        tag = _tag(value.dtype)
        raw = np.ascontiguousarray(value, dtype=_DTYPE_TAGS[tag]).tobytes()
        entries.append(
            CheckpointEntry(
                name=name,
                shape=list(value.shape),
                offset=offset,
                nbytes=len(raw),
                dtype=tag,
                kind="param" if name in param_names else "buffer",
            )
        )
        chunks.append(raw)
        offset += len(raw)

    manifest = CheckpointManifest(
        spec=dataclasses.asdict(model.spec),
        seed=model.seed,
        entries=entries,
        fingerprint=weights_fingerprint(model),
        metadata=metadata or {},
    )
    (directory / BUFFER_NAME).write_bytes(b"".join(chunks))
    manifest_path = directory / MANIFEST_NAME
    manifest_path.write_text(manifest.model_dump_json(indent=2))
    logger.info(f"Saved checkpoint with {len(entries)} entries to {directory}")
    return manifest_path


def read_manifest(directory: Union[str, Path]) -> CheckpointManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise CheckpointError("Checkpoint manifest not found", path=str(path))
    try:
        return CheckpointManifest.model_validate(json.loads(path.read_text()))
    except (json.JSONDecodeError, ValidationError) as e:
        raise CheckpointError("Checkpoint manifest is malformed", path=str(path), original_error=e)


def load_checkpoint(
    directory: Union[str, Path], spec: Optional[ModelSpec] = None
) -> Tuple[SegModel, CheckpointManifest]:
    """
    Rebuild the model recorded in ``directory`` and load its weights.

    When ``spec`` is given it must equal the spec stored in the manifest.
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    stored_spec = manifest.model_spec()
    if spec is not None and dataclasses.asdict(spec) != dataclasses.asdict(stored_spec):
        raise CheckpointError(
            "Checkpoint was written for a different model spec",
            path=str(directory),
            context={"expected": stored_spec.label, "requested": spec.label},
        )

    buffer_path = directory / BUFFER_NAME
    if not buffer_path.exists():
        raise CheckpointError("Checkpoint buffer file not found", path=str(buffer_path))
    raw = buffer_path.read_bytes()
    expected = sum(e.nbytes for e in manifest.entries)
    if len(raw) != expected:
        raise CheckpointError(
            "Checkpoint buffer size does not match the manifest",
            path=str(buffer_path),
            context={"expected_bytes": expected, "actual_bytes": len(raw)},
        )

    state = {}
    for entry in manifest.entries:
        dtype = _DTYPE_TAGS[entry.dtype]
        count = int(np.prod(entry.shape)) if entry.shape else 1
        if count * dtype.itemsize != entry.nbytes:
            raise CheckpointError("Entry byte count disagrees with its shape", parameter=entry.name)
        values = np.frombuffer(raw, dtype=dtype, count=count, offset=entry.offset)
        state[entry.name] = values.reshape(entry.shape).astype(dtype.newbyteorder("="))

    model = build_model(stored_spec, seed=manifest.seed)
    model.load_state_dict(state)
    if weights_fingerprint(model) != manifest.fingerprint:
        raise CheckpointError("Loaded weights do not match the stored fingerprint", path=str(directory))
    logger.info(f"Loaded {stored_spec.label} checkpoint from {directory}")
    return model, manifest
