from typing import Dict

import numpy as np
from annotated_types import Annotated, Ge, Gt, Lt
from pydantic import ConfigDict, Field
from pydantic.dataclasses import dataclass

from .model import ParamStore

__all__ = ["AdamState", "adam_step"]

dataclass_config = ConfigDict(
    validate_assignment=True, extra="forbid", arbitrary_types_allowed=True
)


@dataclass(config=dataclass_config)
class AdamState:
    """Bias-corrected Adam hyperparameters and per-parameter moments.

    Attributes:
        lr (float): Step size.
        beta1 (float): Decay of the first moment, in [0, 1).
        beta2 (float): Decay of the second moment, in [0, 1).
        eps (float): Added to the root of the second moment.
        t (int): Number of completed steps.
    """

    lr: Annotated[float, Gt(0)] = 1e-4
    beta1: Annotated[float, Ge(0), Lt(1)] = 0.0
    beta2: Annotated[float, Ge(0), Lt(1)] = 0.9
    eps: Annotated[float, Gt(0)] = 1e-8
    t: Annotated[int, Ge(0)] = 0
    m: Dict[str, np.ndarray] = Field(default_factory=dict)
    v: Dict[str, np.ndarray] = Field(default_factory=dict)


def adam_step(model: ParamStore, opt: AdamState) -> None:
    """Apply one Adam update from the stored gradients, then zero them."""
    opt.t += 1
    bc1 = 1.0 - opt.beta1**opt.t
    bc2 = 1.0 - opt.beta2**opt.t
    step_size = opt.lr / bc1

    for key, param, grad in model.named_parameters():
        if key not in opt.m:
            opt.m[key] = np.zeros_like(param)
            opt.v[key] = np.zeros_like(param)
        m, v = opt.m[key], opt.v[key]

        m *= opt.beta1
        m += (1.0 - opt.beta1) * grad
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (grad * grad)

        param -= step_size * m / (np.sqrt(v / bc2) + opt.eps)

    model.zero_grad()
    model.version += 1
