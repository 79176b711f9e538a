"""
Group-relative advantages, the k3 KL estimate and the adversarial KL factor.

Everything here is a pure function of numpy arrays / floats and knows nothing
about how responses are produced.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from guirl.types import GroupSample


class ObjectiveConfig(BaseModel):
    """Knobs of the per-response objective J_i = A_i - alpha_i * beta * kl_i."""

    model_config = ConfigDict(frozen=True)

    beta: float = Field(default=1e-4, ge=0.0)
    adversarial: bool = True
    max_reward: float = Field(default=2.0, gt=0.0)
    std_epsilon: float = Field(default=1e-8, gt=0.0)
    clip_epsilon: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _check_finite(self) -> "ObjectiveConfig":
        for name in ("beta", "max_reward", "std_epsilon", "clip_epsilon"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self


def advantages(rewards: Sequence[float], std_epsilon: float = 1e-8) -> np.ndarray:
    """
    (r_i - mean) / std with the population standard deviation.

    Groups whose std falls below `std_epsilon` get all-zero advantages.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError(f"advantages need at least 2 rewards, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    std = r.std()
    if std < std_epsilon:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def kl_estimate(logp_current: Sequence[float], logp_reference: Sequence[float]) -> float:
    """Sum over decisions of rho - log(rho) - 1, rho = exp(logp_ref - logp_cur)."""
    cur = np.asarray(logp_current, dtype=np.float64)
    ref = np.asarray(logp_reference, dtype=np.float64)
    if cur.shape != ref.shape:
        raise ValueError(f"decision count mismatch: {cur.shape} vs {ref.shape}")
    if not (np.all(np.isfinite(cur)) and np.all(np.isfinite(ref))):
        raise ValueError("log-probabilities must be finite")
    d = ref - cur
    # expm1 keeps tiny log-ratios from cancelling to a negative value
    per_decision = np.maximum(np.expm1(d) - d, 0.0)
    return float(per_decision.sum())


def adversarial_factor(reward: float, max_reward: float = 2.0) -> float:
    if max_reward <= 0:
        raise ValueError(f"max_reward must be positive, got {max_reward}")
    if not (math.isfinite(reward) and 0.0 <= reward <= max_reward):
        raise ValueError(f"reward {reward} outside [0, {max_reward}]")
    return reward / max_reward


def _kl_scale(reward: float, cfg: ObjectiveConfig) -> float:
    alpha = adversarial_factor(reward, cfg.max_reward) if cfg.adversarial else 1.0
    return alpha * cfg.beta


def objective(advantage: float, kl: float, reward: float, cfg: ObjectiveConfig) -> float:
    if kl < 0:
        raise ValueError(f"kl must be non-negative, got {kl}")
    return advantage - _kl_scale(reward, cfg) * kl


@dataclass
class GroupLossTerms:
    """Per-response quantities of one group, all arrays of length N."""

    advantages: np.ndarray
    kl: np.ndarray
    adv_coefs: np.ndarray
    kl_coefs: np.ndarray
    objectives: np.ndarray
    clipped: np.ndarray

    @property
    def coefficients(self) -> List[Tuple[float, float]]:
        return [(float(a), float(k)) for a, k in zip(self.adv_coefs, self.kl_coefs)]


def _clipped_adv_coef(
    adv: float, logp_cur: Sequence[float], logp_old: Sequence[float], eps: float
) -> Tuple[float, bool]:
    """
    Gradient coefficient of min(ratio * A, clip(ratio) * A) with respect to log pi.

    The ratio is taken over the whole response. Inside the clipped region the
    surrogate is constant and the coefficient is 0.
    """
    ratio = math.exp(sum(logp_cur) - sum(logp_old))
    if (adv > 0 and ratio > 1 + eps) or (adv < 0 and ratio < 1 - eps):
        return 0.0, True
    return adv * ratio, False


def group_loss_terms(group: GroupSample, cfg: ObjectiveConfig) -> GroupLossTerms:
    """Advantage and KL coefficients of each response for the policy-gradient step."""
    adv = advantages(group.rewards, cfg.std_epsilon)
    kl = np.array(
        [
            kl_estimate(cur, ref)
            for cur, ref in zip(group.logp_current, group.logp_reference)
        ]
    )
    kl_coefs = np.array([_kl_scale(r, cfg) for r in group.rewards])
    adv_coefs = adv.copy()
    clipped = np.zeros(group.size, dtype=bool)
    if cfg.clip_epsilon > 0 and group.logp_old is not None:
        for i in range(group.size):
            adv_coefs[i], clipped[i] = _clipped_adv_coef(
                adv[i], group.logp_current[i], group.logp_old[i], cfg.clip_epsilon
            )
    objectives = np.array(
        [objective(a, k, r, cfg) for a, k, r in zip(adv, kl, group.rewards)]
    )
    return GroupLossTerms(
        advantages=adv,
        kl=kl,
        adv_coefs=adv_coefs,
        kl_coefs=kl_coefs,
        objectives=objectives,
        clipped=clipped,
    )
