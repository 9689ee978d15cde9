"""Discrete-time leaky integrate-and-fire neurons and direct input coding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from . import tensor as te
from .errors import ShapeError

SpikeFn = Callable[[torch.Tensor, float], torch.Tensor]


def heaviside(u: torch.Tensor, threshold: float) -> torch.Tensor:
    return (u >= threshold).to(u.dtype)


@dataclass(frozen=True)
class LifConfig:
    tau_m: float = 4.0 / 3.0
    threshold: float = 1.0
    reset_value: float = 0.0

    def __post_init__(self):
        if not self.tau_m > 1.0:
            raise ValueError(f"tau_m must exceed 1, got {self.tau_m}")
        if not self.threshold > 0.0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if self.reset_value != 0.0:
            raise ValueError("only hard reset to 0 is supported")

    @property
    def decay(self) -> float:
        return 1.0 - 1.0 / self.tau_m

    @property
    def gain(self) -> float:
        return 1.0 / self.tau_m


@dataclass
class LifState:
    membrane: torch.Tensor


def reset_state(state: LifState, cfg: LifConfig = LifConfig()) -> LifState:
    return LifState(torch.full_like(state.membrane, cfg.reset_value))


def zero_state(like: torch.Tensor, cfg: LifConfig = LifConfig()) -> LifState:
    return LifState(torch.full_like(like, cfg.reset_value))


def lif_step(
    state: LifState, current: torch.Tensor, cfg: LifConfig = LifConfig(),
    spike_fn: SpikeFn = heaviside,
) -> tuple[torch.Tensor, LifState]:
    """Integrate one timestep, fire where u >= threshold, hard-reset fired units.

    ``spike_fn`` only changes how gradients flow; its forward value must be
    the Heaviside step. The reset mask is detached so no gradient passes
    through the reset branch.
    """
    if current.shape != state.membrane.shape:
        raise ShapeError(
            f"current shape {tuple(current.shape)} != state shape {tuple(state.membrane.shape)}")
    u = cfg.decay * state.membrane + cfg.gain * current
    spikes = spike_fn(u, cfg.threshold)
    u_next = u * (1.0 - spikes.detach())
    return spikes, LifState(u_next)


def firing_input(u_prev: float, cfg: LifConfig = LifConfig()) -> float:
    """Smallest constant input that makes a neuron at ``u_prev`` fire next step."""
    return cfg.tau_m * (cfg.threshold - cfg.decay * u_prev)


def encoder_current(
    image: torch.Tensor, weights: te.ConvWeights, gamma: torch.Tensor, beta: torch.Tensor,
    eps: float = 1e-5,
) -> torch.Tensor:
    return te.batchnorm_batchstats(te.conv2d(image, weights), gamma, beta, eps)


def direct_encode(
    image: torch.Tensor, weights: te.ConvWeights, gamma: torch.Tensor, beta: torch.Tensor,
    state: LifState | None, cfg: LifConfig = LifConfig(), t: int = 0,
) -> tuple[torch.Tensor, LifState]:
    """Spike map at timestep ``t`` for a real-valued image shown at every step.

    Pass the returned state back in for ``t + 1``; ``state=None`` starts from
    rest and is only valid at ``t == 0``.
    """
    current = encoder_current(image, weights, gamma, beta)
    if state is None:
        if t != 0:
            raise ValueError("a fresh encoder state is only valid at t=0")
        state = zero_state(current, cfg)
    return lif_step(state, current, cfg)
