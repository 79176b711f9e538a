"""
Binary checkpoints.

Policy file:   b"GUIRLVG1" | feature_dim, H, G, S (uint32 LE) | params as <f8
Trainer file:  b"GUIRLCK1" | policy block | reference block | optimizer block | json trailer
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from guirl.errors import DataError
from guirl.policy.network import PolicyDims, PolicyParams
from guirl.policy.optimizer import OptimizerState

logger = logging.getLogger(__name__)

POLICY_MAGIC = b"GUIRLVG1"
TRAINER_MAGIC = b"GUIRLCK1"
_POLICY_HEADER = struct.Struct("<8s4I")
# step, total_steps, has_moments, base_lr, weight_decay, beta1, beta2, eps
_OPTIMIZER_HEADER = struct.Struct("<QQ?5d")
_TRAILER_LEN = struct.Struct("<Q")


def encode_policy(params: PolicyParams) -> bytes:
    dims = params.dims
    header = _POLICY_HEADER.pack(
        POLICY_MAGIC, dims.feature_dim, dims.hidden, dims.grid, dims.styles
    )
    return header + params.flat().astype("<f8").tobytes()


def decode_policy(
    buf: bytes, offset: int = 0, expected: Optional[PolicyDims] = None
) -> Tuple[PolicyParams, int]:
    if len(buf) - offset < _POLICY_HEADER.size:
        raise DataError("truncated checkpoint: policy header incomplete")
    magic, feature_dim, hidden, grid, styles = _POLICY_HEADER.unpack_from(buf, offset)
    if magic != POLICY_MAGIC:
        raise DataError(f"bad policy magic {magic!r}, expected {POLICY_MAGIC!r}")
    try:
        dims = PolicyDims(feature_dim=feature_dim, hidden=hidden, grid=grid, styles=styles)
    except ValueError as e:
        raise DataError(f"invalid policy header: {e}") from e
    if expected is not None:
        for name in ("feature_dim", "hidden", "grid", "styles"):
            got, want = getattr(dims, name), getattr(expected, name)
            if got != want:
                raise DataError(f"checkpoint {name}={got} does not match expected {name}={want}")
    offset += _POLICY_HEADER.size
    nbytes = dims.param_count * 8
    if len(buf) - offset < nbytes:
        raise DataError(
            f"truncated checkpoint: expected {dims.param_count} parameters, "
            f"found {(len(buf) - offset) // 8}"
        )
    values = np.frombuffer(buf, dtype="<f8", count=dims.param_count, offset=offset)
    params = PolicyParams.from_flat(dims, values.astype(np.float64))
    if not params.is_finite():
        raise DataError("checkpoint contains non-finite parameters")
    return params, offset + nbytes


def save_policy(params: PolicyParams, path: str | Path) -> None:
    Path(path).write_bytes(encode_policy(params))


def load_policy(path: str | Path, expected: Optional[PolicyDims] = None) -> PolicyParams:
    buf = Path(path).read_bytes()
    params, end = decode_policy(buf, 0, expected)
    if end != len(buf):
        raise DataError(f"{path}: {len(buf) - end} trailing bytes after policy parameters")
    return params


def _encode_moments(params: Optional[PolicyParams]) -> bytes:
    return b"" if params is None else params.flat().astype("<f8").tobytes()


def encode_optimizer(state: OptimizerState) -> bytes:
    has_moments = state.exp_avg is not None and state.exp_avg_sq is not None
    header = _OPTIMIZER_HEADER.pack(
        state.step,
        state.total_steps,
        has_moments,
        state.base_lr,
        state.weight_decay,
        state.beta1,
        state.beta2,
        state.eps,
    )
    if not has_moments:
        return header
    return header + _encode_moments(state.exp_avg) + _encode_moments(state.exp_avg_sq)


def decode_optimizer(buf: bytes, offset: int, dims: PolicyDims) -> Tuple[OptimizerState, int]:
    if len(buf) - offset < _OPTIMIZER_HEADER.size:
        raise DataError("truncated checkpoint: optimizer header incomplete")
    step, total, has_moments, base_lr, wd, b1, b2, eps = _OPTIMIZER_HEADER.unpack_from(buf, offset)
    offset += _OPTIMIZER_HEADER.size
    state = OptimizerState(
        base_lr=base_lr,
        total_steps=total,
        weight_decay=wd,
        beta1=b1,
        beta2=b2,
        eps=eps,
        step=step,
    )
    if has_moments:
        nbytes = dims.param_count * 8
        if len(buf) - offset < 2 * nbytes:
            raise DataError("truncated checkpoint: optimizer moments incomplete")
        m = np.frombuffer(buf, dtype="<f8", count=dims.param_count, offset=offset)
        v = np.frombuffer(buf, dtype="<f8", count=dims.param_count, offset=offset + nbytes)
        state.exp_avg = PolicyParams.from_flat(dims, m.astype(np.float64))
        state.exp_avg_sq = PolicyParams.from_flat(dims, v.astype(np.float64))
        offset += 2 * nbytes
    return state, offset


@dataclass
class TrainerCheckpoint:
    params: PolicyParams
    reference: PolicyParams
    optimizer: OptimizerState
    step: int
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(checkpoint: TrainerCheckpoint, path: str | Path) -> None:
    trailer = json.dumps(
        {"step": checkpoint.step, "seed": checkpoint.seed, "config": checkpoint.config},
        sort_keys=True,
    ).encode("utf-8")
    payload = b"".join(
        [
            TRAINER_MAGIC,
            encode_policy(checkpoint.params),
            encode_policy(checkpoint.reference),
            encode_optimizer(checkpoint.optimizer),
            _TRAILER_LEN.pack(len(trailer)),
            trailer,
        ]
    )
    Path(path).write_bytes(payload)
    logger.info(f"Saved checkpoint at step {checkpoint.step} to {path}")


def load_checkpoint(path: str | Path, expected: Optional[PolicyDims] = None) -> TrainerCheckpoint:
    buf = Path(path).read_bytes()
    if buf[: len(TRAINER_MAGIC)] != TRAINER_MAGIC:
        raise DataError(f"{path}: not a trainer checkpoint (bad magic)")
    offset = len(TRAINER_MAGIC)
    params, offset = decode_policy(buf, offset, expected)
    reference, offset = decode_policy(buf, offset, params.dims)
    optimizer, offset = decode_optimizer(buf, offset, params.dims)
    if len(buf) - offset < _TRAILER_LEN.size:
        raise DataError(f"{path}: truncated checkpoint trailer")
    (length,) = _TRAILER_LEN.unpack_from(buf, offset)
    offset += _TRAILER_LEN.size
    if len(buf) - offset != length:
        raise DataError(f"{path}: trailer length {length} does not match file size")
    try:
        meta = json.loads(buf[offset:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: corrupt checkpoint trailer: {e}") from e
    return TrainerCheckpoint(
        params=params,
        reference=reference,
        optimizer=optimizer,
        step=int(meta["step"]),
        seed=int(meta["seed"]),
        config=meta.get("config", {}),
    )


def load_any_policy(path: str | Path, expected: Optional[PolicyDims] = None) -> PolicyParams:
    """Current params from either a policy file or a trainer checkpoint."""
    with open(path, "rb") as f:
        magic = f.read(len(TRAINER_MAGIC))
    if magic == TRAINER_MAGIC:
        return load_checkpoint(path, expected).params
    return load_policy(path, expected)
