"""
Decision distributions of a structured response.

A response is six independent decisions, recorded in this order:
four tag bits (`<think>`, `</think>`, `<answer>`, `</answer>`), the answer
style and the grid cell.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from guirl.types import PredictionMode, StructuredResponse

NUM_TAGS = 4
NUM_DECISIONS = NUM_TAGS + 2
STYLE_DECISION = NUM_TAGS
GRID_DECISION = NUM_TAGS + 1


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z)
    return shifted - np.log(np.sum(np.exp(shifted)))


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    """log(1 / (1 + exp(-z))) without overflow."""
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def _safe_log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(p, dtype=np.float64))


@dataclass(frozen=True)
class DistributionParams:
    """Log-probabilities of every decision; impossible outcomes hold -inf."""

    grid_logp: np.ndarray
    tag_log_on: np.ndarray
    tag_log_off: np.ndarray
    style_logp: np.ndarray

    def __post_init__(self):
        if self.tag_log_on.shape != (NUM_TAGS,) or self.tag_log_off.shape != (NUM_TAGS,):
            raise ValueError(f"expected {NUM_TAGS} tag probabilities")
        for name in ("grid_logp", "style_logp"):
            total = float(np.sum(np.exp(getattr(self, name))))
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"{name} sums to {total} in probability space")
        on_off = np.exp(self.tag_log_on) + np.exp(self.tag_log_off)
        if np.any(np.abs(on_off - 1.0) > 1e-9):
            raise ValueError("tag on/off probabilities do not sum to 1")

    @classmethod
    def from_probs(
        cls, grid_probs: np.ndarray, tag_probs: np.ndarray, style_probs: np.ndarray
    ) -> "DistributionParams":
        tag_probs = np.asarray(tag_probs, dtype=np.float64)
        return cls(
            grid_logp=_safe_log(grid_probs),
            tag_log_on=_safe_log(tag_probs),
            tag_log_off=_safe_log(1.0 - tag_probs),
            style_logp=_safe_log(style_probs),
        )

    @property
    def num_cells(self) -> int:
        return self.grid_logp.shape[0]

    @property
    def grid_size(self) -> int:
        return int(round(np.sqrt(self.num_cells)))

    @property
    def num_styles(self) -> int:
        return self.style_logp.shape[0]

    @property
    def tag_probs(self) -> np.ndarray:
        return np.exp(self.tag_log_on)


def _categorical(logp: np.ndarray, u: float) -> int:
    cdf = np.cumsum(np.exp(logp))
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, logp.shape[0] - 1)


def sample(
    dist: DistributionParams,
    rng: np.random.Generator,
    prediction_mode: PredictionMode = "point",
) -> Tuple[StructuredResponse, np.ndarray]:
    """Draw one response and the log-probability of each of its decisions."""
    u_tags = rng.random(NUM_TAGS)
    u_style, u_grid = rng.random(2)
    included = tuple(bool(u < p) for u, p in zip(u_tags, dist.tag_probs))
    response = StructuredResponse(
        tag_included=included,
        style=_categorical(dist.style_logp, u_style),
        cell=_categorical(dist.grid_logp, u_grid),
        prediction_mode=prediction_mode,
    )
    return response, logprob(dist, response)


def logprob(dist: DistributionParams, response: StructuredResponse) -> np.ndarray:
    if response.cell >= dist.num_cells:
        raise ValueError(f"cell {response.cell} out of range [0, {dist.num_cells})")
    if response.style >= dist.num_styles:
        raise ValueError(f"style {response.style} out of range [0, {dist.num_styles})")
    out = np.empty(NUM_DECISIONS)
    for j, on in enumerate(response.tag_included):
        out[j] = dist.tag_log_on[j] if on else dist.tag_log_off[j]
    out[STYLE_DECISION] = dist.style_logp[response.style]
    out[GRID_DECISION] = dist.grid_logp[response.cell]
    return out


def greedy(
    dist: DistributionParams, prediction_mode: PredictionMode = "point"
) -> StructuredResponse:
    """Most likely outcome of every decision; a tag is kept on ties."""
    return StructuredResponse(
        tag_included=tuple(bool(on >= off) for on, off in zip(dist.tag_log_on, dist.tag_log_off)),
        style=int(np.argmax(dist.style_logp)),
        cell=int(np.argmax(dist.grid_logp)),
        prediction_mode=prediction_mode,
    )


def _categorical_kl(logp_a: np.ndarray, logp_b: np.ndarray) -> float:
    p = np.exp(logp_a)
    mask = p > 0
    with np.errstate(invalid="ignore"):
        return float(np.sum(p[mask] * (logp_a[mask] - logp_b[mask])))


def closed_form_kl(dist_a: DistributionParams, dist_b: DistributionParams) -> float:
    """
    Exact KL(a || b) summed over the six decision distributions.

    This is the quantity the k3 estimate converges to when responses are
    drawn from `dist_a`.
    """
    if (
        dist_a.num_cells != dist_b.num_cells
        or dist_a.num_styles != dist_b.num_styles
    ):
        raise ValueError(
            f"distribution shapes differ: {dist_a.num_cells}/{dist_a.num_styles} cells/styles "
            f"vs {dist_b.num_cells}/{dist_b.num_styles}"
        )
    terms = [
        _categorical_kl(
            np.array([dist_a.tag_log_on[j], dist_a.tag_log_off[j]]),
            np.array([dist_b.tag_log_on[j], dist_b.tag_log_off[j]]),
        )
        for j in range(NUM_TAGS)
    ]
    terms.append(_categorical_kl(dist_a.style_logp, dist_b.style_logp))
    terms.append(_categorical_kl(dist_a.grid_logp, dist_b.grid_logp))
    return max(0.0, float(sum(terms)))
