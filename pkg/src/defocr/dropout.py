"""Inverted dropout with a rate that tracks the generalization gap.

A bang-bang controller nudges the single shared rate once per epoch:
widen regularization when val loss runs ahead of train loss, relax it
when the gap closes. Survivors are pre-scaled by 1/(1-rate) so the
expected activation is unchanged and evaluation needs no rescaling.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .rng import SplitMix64


@dataclass(frozen=True)
class AdaptiveDropoutState:
    rate: float = 0.1
    p_min: float = 0.0
    p_max: float = 0.5
    delta: float = 0.02
    tau_high: float = 0.10
    tau_low: float = 0.02

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_min <= self.p_max < 1.0:
            raise ConfigError(
                f"need 0 <= p_min <= p_max < 1, got [{self.p_min}, {self.p_max}]"
            )
        if not self.p_min <= self.rate <= self.p_max:
            raise ConfigError(
                f"rate {self.rate} outside [{self.p_min}, {self.p_max}]"
            )
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.tau_low > self.tau_high:
            raise ConfigError(
                f"tau_low {self.tau_low} exceeds tau_high {self.tau_high}"
            )


def dropout_apply(
    x: np.ndarray, rate: float, rng: SplitMix64, training: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Zero each element w.p. rate and scale survivors; returns (out, mask).

    The mask already folds in the 1/(1-rate) survivor scale, so the
    backward pass is grad_in = grad_out * mask.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training:
        return x, np.ones_like(x)
    keep = rng.uniform_array(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def rate_update(
    state: AdaptiveDropoutState, train_loss: float, val_loss: float
) -> AdaptiveDropoutState:
    """One controller step on the gap val_loss - train_loss, then clamp."""
    if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
        raise ConfigError(
            f"losses must be finite, got train={train_loss}, val={val_loss}"
        )
    gap = val_loss - train_loss
    rate = state.rate
    if gap > state.tau_high:
        rate += state.delta
    elif gap < state.tau_low:
        rate -= state.delta
    rate = min(max(rate, state.p_min), state.p_max)
    return replace(state, rate=rate)
