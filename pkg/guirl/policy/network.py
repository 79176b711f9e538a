"""
One-hidden-layer tanh network producing the decision distributions of a response.

    h      = tanh(W1 x + b1)
    a      = W_grid h + b_grid     (G row logits, then G column logits)
    grid   = a_row[r] + a_col[c]   (G*G cell logits, row-major)
    tags   = W_tag h + b_tag       (4 Bernoulli logits, one per tag)
    styles = W_style h + b_style   (S logits, answer rendering style)

Gradients are written out by hand; `group_loss` is the scalar they differentiate.
"""

import hashlib
from dataclasses import dataclass, fields
from typing import Callable, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from guirl.policy.sampling import (
    NUM_DECISIONS,
    NUM_TAGS,
    DistributionParams,
    log_sigmoid,
    log_softmax,
    logprob,
)
from guirl.types import StructuredResponse

PARAM_NAMES: Tuple[str, ...] = (
    "W1",
    "b1",
    "W_grid",
    "b_grid",
    "W_tag",
    "b_tag",
    "W_style",
    "b_style",
)


class PolicyDims(BaseModel):
    model_config = ConfigDict(frozen=True)

    feature_dim: int = Field(gt=0)
    hidden: int = Field(default=32, gt=0)
    grid: int = Field(default=16, gt=0)
    styles: int = Field(default=3, gt=0)

    @property
    def num_cells(self) -> int:
        return self.grid * self.grid

    @property
    def grid_logits(self) -> int:
        return 2 * self.grid

    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        f, h, c, s = self.feature_dim, self.hidden, self.grid_logits, self.styles
        return ((h, f), (h,), (c, h), (c,), (NUM_TAGS, h), (NUM_TAGS,), (s, h), (s,))

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for shape in self.shapes())


@dataclass
class PolicyParams:
    """Network weights in declaration order; also used for gradients and moments."""

    W1: np.ndarray
    b1: np.ndarray
    W_grid: np.ndarray
    b_grid: np.ndarray
    W_tag: np.ndarray
    b_tag: np.ndarray
    W_style: np.ndarray
    b_style: np.ndarray

    @property
    def dims(self) -> PolicyDims:
        hidden, feature_dim = self.W1.shape
        return PolicyDims(
            feature_dim=feature_dim,
            hidden=hidden,
            grid=self.b_grid.shape[0] // 2,
            styles=self.b_style.shape[0],
        )

    def arrays(self) -> List[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "PolicyParams":
        return PolicyParams(*(fn(a) for a in self.arrays()))

    def zip_map(
        self, other: "PolicyParams", fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ) -> "PolicyParams":
        return PolicyParams(*(fn(a, b) for a, b in zip(self.arrays(), other.arrays())))

    def copy(self) -> "PolicyParams":
        return self.map(lambda a: np.array(a, dtype=np.float64, copy=True))

    def frozen(self) -> "PolicyParams":
        """A read-only copy; in-place writes raise."""
        out = self.copy()
        for a in out.arrays():
            a.setflags(write=False)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, dims: PolicyDims, values: np.ndarray) -> "PolicyParams":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (dims.param_count,):
            raise ValueError(
                f"expected {dims.param_count} parameters for {dims}, got {values.size}"
            )
        out, offset = [], 0
        for shape in dims.shapes():
            n = int(np.prod(shape))
            out.append(values[offset : offset + n].reshape(shape).copy())
            offset += n
        return cls(*out)

    @classmethod
    def zeros(cls, dims: PolicyDims) -> "PolicyParams":
        return cls(*(np.zeros(shape) for shape in dims.shapes()))

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for a in self.arrays():
            digest.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return digest.hexdigest()

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def allclose(self, other: "PolicyParams", **kwargs) -> bool:
        return all(np.allclose(a, b, **kwargs) for a, b in zip(self.arrays(), other.arrays()))

    def equal(self, other: "PolicyParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_params(
    dims: PolicyDims, rng: np.random.Generator, head_scale: float = 0.01
) -> PolicyParams:
    """
    Random hidden layer, near-zero heads and zero biases.

    Small heads start every decision close to uniform.
    """
    h, f = dims.hidden, dims.feature_dim
    return PolicyParams(
        W1=rng.normal(0.0, 1.0 / np.sqrt(f), size=(h, f)),
        b1=np.zeros(h),
        W_grid=rng.normal(0.0, head_scale, size=(dims.grid_logits, h)),
        b_grid=np.zeros(dims.grid_logits),
        W_tag=rng.normal(0.0, head_scale, size=(NUM_TAGS, h)),
        b_tag=np.zeros(NUM_TAGS),
        W_style=rng.normal(0.0, head_scale, size=(dims.styles, h)),
        b_style=np.zeros(dims.styles),
    )


def _check_features(params: PolicyParams, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    expected = params.W1.shape[1]
    if x.shape != (expected,):
        raise ValueError(f"feature vector has shape {x.shape}, expected ({expected},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature vector contains non-finite values")
    return x


def _hidden(params: PolicyParams, x: np.ndarray) -> np.ndarray:
    return np.tanh(params.W1 @ x + params.b1)


def _grid_logp(params: PolicyParams, h: np.ndarray) -> np.ndarray:
    a = params.W_grid @ h + params.b_grid
    g = a.shape[0] // 2
    # the row and column softmaxes multiply, so the joint needs no renormalizing
    return (log_softmax(a[:g])[:, None] + log_softmax(a[g:])[None, :]).ravel()


def _heads(params: PolicyParams, h: np.ndarray) -> DistributionParams:
    tag_logits = params.W_tag @ h + params.b_tag
    return DistributionParams(
        grid_logp=_grid_logp(params, h),
        tag_log_on=log_sigmoid(tag_logits),
        tag_log_off=log_sigmoid(-tag_logits),
        style_logp=log_softmax(params.W_style @ h + params.b_style),
    )


def forward(params: PolicyParams, features: np.ndarray) -> DistributionParams:
    x = _check_features(params, features)
    return _heads(params, _hidden(params, x))


def _decision_weights(
    current_logp: np.ndarray,
    ref_logp: np.ndarray,
    coeffs: Sequence[Tuple[float, float]],
) -> np.ndarray:
    """
    dL/d(log pi) for every decision, shape (N, NUM_DECISIONS).

    d(rho - log rho - 1)/d(log pi) = 1 - rho, so each decision carries
    adv_coef - kl_coef * (1 - rho).
    """
    n = current_logp.shape[0]
    coef = np.asarray(coeffs, dtype=np.float64).reshape(n, 2)
    rho = np.exp(ref_logp - current_logp)
    w = coef[:, :1] - coef[:, 1:] * (1.0 - rho)
    return -w / n


def _check_batch(responses, coeffs, ref_logp) -> np.ndarray:
    ref = np.asarray(ref_logp, dtype=np.float64)
    n = len(responses)
    if n == 0:
        raise ValueError("backward needs at least one response")
    if len(coeffs) != n or ref.shape != (n, NUM_DECISIONS):
        raise ValueError(
            f"{n} responses need {n} coefficient pairs and ref_logp of shape "
            f"({n}, {NUM_DECISIONS}); got {len(coeffs)} and {ref.shape}"
        )
    return ref


def group_loss(
    params: PolicyParams,
    features: np.ndarray,
    responses: Sequence[StructuredResponse],
    coeffs: Sequence[Tuple[float, float]],
    ref_logp: np.ndarray,
) -> float:
    """L = -(1/N) sum_i [adv_coef_i * log pi(o_i) - kl_coef_i * kl_i]."""
    ref = _check_batch(responses, coeffs, ref_logp)
    dist = forward(params, features)
    total = 0.0
    for (adv_coef, kl_coef), response, ref_row in zip(coeffs, responses, ref):
        cur = logprob(dist, response)
        d = ref_row - cur
        kl = float(np.sum(np.expm1(d) - d))
        total += adv_coef * float(cur.sum()) - kl_coef * kl
    return -total / len(responses)


def backward(
    params: PolicyParams,
    features: np.ndarray,
    responses: Sequence[StructuredResponse],
    coeffs: Sequence[Tuple[float, float]],
    ref_logp: np.ndarray,
) -> PolicyParams:
    """Analytic gradient of `group_loss` with respect to every parameter."""
    ref = _check_batch(responses, coeffs, ref_logp)
    x = _check_features(params, features)
    h = _hidden(params, x)
    dist = _heads(params, h)
    current = np.stack([logprob(dist, r) for r in responses])
    weights = _decision_weights(current, ref, coeffs)

    grid_p = np.exp(dist.grid_logp)
    style_p = np.exp(dist.style_logp)
    tag_p = np.exp(dist.tag_log_on)

    d_grid = np.zeros_like(grid_p)
    d_style = np.zeros_like(style_p)
    d_tag = np.zeros_like(tag_p)
    for w, r in zip(weights, responses):
        # d log softmax_c / dz = onehot(c) - p ; d log sigmoid / dt = y - sigma
        y = np.array(r.tag_included, dtype=np.float64)
        d_tag += w[:NUM_TAGS] * (y - tag_p)
        d_style -= w[NUM_TAGS] * style_p
        d_style[r.style] += w[NUM_TAGS]
        d_grid -= w[NUM_TAGS + 1] * grid_p
        d_grid[r.cell] += w[NUM_TAGS + 1]

    # d log p(r, c) / d a = onehot(r) - p_row on the rows, likewise on the columns
    g = params.b_grid.shape[0] // 2
    cells = d_grid.reshape(g, g)
    d_axes = np.concatenate([cells.sum(axis=1), cells.sum(axis=0)])

    dh = params.W_grid.T @ d_axes + params.W_tag.T @ d_tag + params.W_style.T @ d_style
    d_pre = dh * (1.0 - h * h)
    return PolicyParams(
        W1=np.outer(d_pre, x),
        b1=d_pre,
        W_grid=np.outer(d_axes, h),
        b_grid=d_axes,
        W_tag=np.outer(d_tag, h),
        b_tag=d_tag,
        W_style=np.outer(d_style, h),
        b_style=d_style,
    )
