"""Training objective: adversarial pair terms plus lower-half L1.

The reconstruction loss deliberately covers only the lower half of the
frame (rows H/2 .. H-1, row 0 at the top): the mouth region must track
the audio while the upper half is left to the adversarial terms, which
keeps blinks and eyebrow motion from being averaged away.  It is a raw
pixel sum, not a mean, so the weighting constant trades off against
resolution exactly as written.

Adversarial terms follow the conditional-GAN pair form

    v(D) = log D(real, cond) + log(1 - D(fake, cond))

reported as a value in (-inf, 0] that the discriminator maximizes.  The
generator minimizes the non-saturating -log D(fake) by default (the
saturating +log(1 - D(fake)) is available behind a flag), plus the
weighted L1.  Probabilities are clamped away from {0, 1} so logs stay
finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

__all__ = [
    "PROB_EPS",
    "l1_lower_half",
    "l1_lower_half_masked",
    "disc_pair_value",
    "generator_adversarial",
    "total_objective",
    "LossReport",
]

PROB_EPS = 1e-7


def _as_nchw(frame) -> torch.Tensor:
    """Accept media-convention numpy (H,W,C)/(T,H,W,C) or torch (...,C,H,W)."""
    if isinstance(frame, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(frame, dtype=np.float32)).movedim(-1, -3)
    return frame


def l1_lower_half(real, fake) -> torch.Tensor:
    """Sum of |real - fake| over the lower half of the frame, all channels.

    Accepts numpy frames (..., H, W, C) or torch tensors (..., C, H, W);
    upper-half pixels contribute nothing, so their gradients are exactly
    zero.  Leading batch/time axes are summed over as well.
    """
    real_t, fake_t = _as_nchw(real), _as_nchw(fake)
    if real_t.shape != fake_t.shape:
        raise ValueError(f"shape mismatch: {tuple(real_t.shape)} vs {tuple(fake_t.shape)}")
    height = real_t.shape[-2]
    if height % 2:
        raise ValueError(f"frame height must be even, got {height}")
    lower = slice(height // 2, height)
    return (real_t[..., lower, :] - fake_t[..., lower, :]).abs().sum()


def l1_lower_half_masked(
    real: torch.Tensor, fake: torch.Tensor, mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean per-frame lower-half L1 over the valid steps of a padded batch.

    real/fake: (B, T, C, H, W); mask: (B, T) with 1 on real steps.  Each
    frame contributes its raw pixel sum; padded steps are excluded from
    both numerator and denominator.
    """
    if real.shape != fake.shape:
        raise ValueError(f"shape mismatch: {tuple(real.shape)} vs {tuple(fake.shape)}")
    height = real.shape[-2]
    lower = slice(height // 2, height)
    per_frame = (real[..., lower, :] - fake[..., lower, :]).abs().sum(dim=(-3, -2, -1))
    if mask is None:
        return per_frame.mean()
    mask = mask.to(per_frame.dtype)
    return (per_frame * mask).sum() / mask.sum().clamp(min=1.0)


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def disc_pair_value(p_real: torch.Tensor, p_fake: torch.Tensor) -> torch.Tensor:
    """log D(real) + log(1 - D(fake)), batch-averaged; in (-inf, 0]."""
    return (torch.log(_clamp(p_real)) + torch.log(1.0 - _clamp(p_fake))).mean()


def generator_adversarial(p_fake: torch.Tensor, saturating: bool = False) -> torch.Tensor:
    """Generator's adversarial loss for one discriminator (lower is better)."""
    if saturating:
        return torch.log(1.0 - _clamp(p_fake)).mean()
    return -torch.log(_clamp(p_fake)).mean()


def total_objective(l_adv: float, l_l1: float, lambda_l1: float) -> float:
    """Combined objective: adversarial aggregate plus weighted reconstruction."""
    return float(l_adv) + float(lambda_l1) * float(l_l1)


@dataclass
class LossReport:
    """Per-step scalar record; adversarial entries are the pair values
    maximized by each discriminator (0 when that adversary is disabled)."""

    step: int
    l_adv_img: float
    l_adv_seq: float
    l_l1: float
    total: float
    lr_generator: float = 0.0
    lr_frame_disc: float = 0.0
    lr_seq_disc: float = 0.0

    def __post_init__(self):
        values = (self.l_adv_img, self.l_adv_seq, self.l_l1, self.total)
        if not all(np.isfinite(v) for v in values):
            raise ValueError(f"non-finite loss at step {self.step}: {values}")
        if self.l_l1 < 0:
            raise ValueError(f"negative L1 at step {self.step}: {self.l_l1}")

    @staticmethod
    def csv_header() -> str:
        return "step,l_adv_img,l_adv_seq,l_l1,total,lr_generator,lr_frame_disc,lr_seq_disc"

    def csv_row(self) -> str:
        return (
            f"{self.step},{self.l_adv_img:.8g},{self.l_adv_seq:.8g},{self.l_l1:.8g},"
            f"{self.total:.8g},{self.lr_generator:.8g},{self.lr_frame_disc:.8g},"
            f"{self.lr_seq_disc:.8g}"
        )
