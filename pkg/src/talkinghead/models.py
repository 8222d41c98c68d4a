"""Networks: recurrent frame generator and its two adversaries.

The generator turns one still frame plus a sequence of raw audio windows
into a video, one frame per window.  A conv Identity Encoder reads the
still once per sequence (producing a 50-dim code and U-Net skips), a 1-D
conv audio encoder feeds a 2-layer GRU that carries speech context, and a
1-layer GRU driven by Gaussian draws supplies a 10-dim noise track.  The
concatenated 316-dim latent is decoded with strided transposed
convolutions, mixing the identity skips back in at equal resolutions.

Both discriminators consume the generator's output: a frame discriminator
conditioned on the still (channel concatenation, 6 input channels) and a
sequence discriminator that encodes (frame, audio window) pairs per step,
aggregates them with a 2-layer GRU and classifies the final hidden state.

All hidden activations are ReLU; encoders and the decoder end in tanh,
discriminators in a sigmoid.  Batch statistics are shared across
timesteps (sequences are folded into the batch axis), and inference uses
the running averages, which makes streaming equal to batched decoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .audio import AudioFrameSeq
from .media import VideoSeq

__all__ = [
    "ArchConfig",
    "IdentityEncoder",
    "AudioEncoder",
    "ContextEncoder",
    "NoiseGenerator",
    "FrameDecoder",
    "Generator",
    "GeneratorStream",
    "FrameDiscriminator",
    "SequenceDiscriminator",
    "sample_real_fake_pair",
    "frames_to_tensor",
    "tensor_to_frames",
    "draw_noise",
]

ID_DIM = 50
CTX_DIM = 256
NOISE_DIM = 10
LATENT_DIM = ID_DIM + CTX_DIM + NOISE_DIM

_CHANNEL_TABLE = (32, 64, 128, 256, 512, 512, 512, 512)


@dataclass(frozen=True)
class ArchConfig:
    """Shape knobs shared by all networks.

    height/width must be equal powers of two (>= 8); depth is log2(height)
    so the conv stacks always bottom out at 1x1.  channel_scale shrinks
    every width proportionally for desk-scale runs.
    """

    height: int = 64
    width: int = 64
    audio_window: int = 1280
    channel_scale: float = 1.0
    noise_variance: float = 0.6

    def __post_init__(self):
        if self.height != self.width:
            raise ValueError(f"frames must be square, got {self.height}x{self.width}")
        if self.height < 8 or self.height & (self.height - 1):
            raise ValueError(f"height must be a power of two >= 8, got {self.height}")
        if self.audio_window < 160:
            raise ValueError(f"audio window too short: {self.audio_window}")
        if self.channel_scale <= 0 or self.noise_variance <= 0:
            raise ValueError("channel_scale and noise_variance must be positive")

    @property
    def depth(self) -> int:
        return int(math.log2(self.height))

    @property
    def image_channels(self) -> tuple[int, ...]:
        return tuple(self._scale(c) for c in _CHANNEL_TABLE[: self.depth])

    @property
    def audio_channels(self) -> tuple[int, ...]:
        return tuple(self._scale(c) for c in _CHANNEL_TABLE[:7])

    def _scale(self, c: int) -> int:
        return max(4, int(round(c * self.channel_scale)))

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "audio_window": self.audio_window,
            "channel_scale": self.channel_scale,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "ArchConfig":
        return cls(**raw)


def _init_weights(module: nn.Module) -> None:
    name = module.__class__.__name__
    if "Conv" in name and hasattr(module, "weight"):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif "BatchNorm" in name:
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


def frames_to_tensor(pixels: np.ndarray) -> torch.Tensor:
    """(..., H, W, 3) float [-1,1] -> torch (..., 3, H, W)."""
    arr = torch.from_numpy(np.ascontiguousarray(pixels, dtype=np.float32))
    return arr.movedim(-1, -3)


def tensor_to_frames(x: torch.Tensor) -> np.ndarray:
    arr = x.detach().movedim(-3, -1).clamp(-1.0, 1.0)
    return np.ascontiguousarray(arr.cpu().numpy(), dtype=np.float32)


def draw_noise(
    shape: Sequence[int], variance: float, generator: torch.Generator | None = None
) -> torch.Tensor:
    """i.i.d. Gaussian noise-GRU inputs with the configured variance."""
    eps = torch.randn(*shape, generator=generator)
    return eps * math.sqrt(variance)


class _ConvImageEncoder(nn.Module):
    """Stride-2 conv pyramid down to 1x1 plus a bounded linear projection."""

    def __init__(self, cfg: ArchConfig, out_dim: int, in_channels: int = 3):
        super().__init__()
        self.cfg = cfg
        self.out_dim = out_dim
        blocks = []
        prev = in_channels
        for ch in cfg.image_channels:
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(prev, ch, 4, stride=2, padding=1),
                    nn.BatchNorm2d(ch),
                    nn.ReLU(inplace=True),
                )
            )
            prev = ch
        self.blocks = nn.ModuleList(blocks)
        self.project = nn.Linear(prev, out_dim)
        self.apply(_init_weights)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        if images.shape[-2:] != (self.cfg.height, self.cfg.width):
            raise ValueError(
                f"expected {self.cfg.height}x{self.cfg.width} input, got {tuple(images.shape)}"
            )
        skips = []
        x = images
        for block in self.blocks:
            x = block(x)
            skips.append(x)
        code = torch.tanh(self.project(x.flatten(1)))
        return code, skips


class IdentityEncoder(_ConvImageEncoder):
    """Still image -> 50-dim identity code + per-layer skip features."""

    def __init__(self, cfg: ArchConfig):
        super().__init__(cfg, out_dim=ID_DIM, in_channels=3)


class AudioEncoder(nn.Module):
    """Raw waveform window -> 256-dim feature.

    The first 1-D convolution uses a large kernel (250 samples at the
    8000-sample reference window, scaled with the window length) so the
    remaining stack stays shallow; six stride-2 layers then reduce to a
    short sequence that a linear layer maps to the feature size.
    """

    def __init__(self, cfg: ArchConfig, out_dim: int = CTX_DIM):
        super().__init__()
        self.cfg = cfg
        self.out_dim = out_dim
        window = cfg.audio_window
        k1 = max(3, int(round(window * 250 / 8000)))
        s1 = max(1, int(round(window * 50 / 8000)))
        chans = cfg.audio_channels
        layers: list[nn.Module] = [
            nn.Conv1d(1, chans[0], k1, stride=s1),
            nn.BatchNorm1d(chans[0]),
            nn.ReLU(inplace=True),
        ]
        length = (window - k1) // s1 + 1
        for cin, cout in zip(chans[:-1], chans[1:]):
            layers += [
                nn.Conv1d(cin, cout, 4, stride=2, padding=1),
                nn.BatchNorm1d(cout),
                nn.ReLU(inplace=True),
            ]
            length = (length + 2 - 4) // 2 + 1
        if length < 1:
            raise ValueError(f"audio window {window} too short for the conv stack")
        self.net = nn.Sequential(*layers)
        self.project = nn.Linear(chans[-1] * length, out_dim)
        self.apply(_init_weights)

    def forward(self, windows: torch.Tensor) -> torch.Tensor:
        if windows.shape[-1] != self.cfg.audio_window:
            raise ValueError(
                f"expected windows of {self.cfg.audio_window} samples, got {windows.shape[-1]}"
            )
        x = self.net(windows.unsqueeze(-2))
        return torch.tanh(self.project(x.flatten(1)))


class ContextEncoder(nn.Module):
    """2-layer GRU over per-window audio features; output is z_c."""

    def __init__(self, dim: int = CTX_DIM):
        super().__init__()
        self.gru = nn.GRU(dim, dim, num_layers=2, batch_first=True)

    def forward(
        self, features: torch.Tensor, state: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        return self.gru(features, state)


class NoiseGenerator(nn.Module):
    """1-layer GRU fed i.i.d. Gaussian draws; output is z_n."""

    def __init__(self, dim: int = NOISE_DIM):
        super().__init__()
        self.gru = nn.GRU(dim, dim, num_layers=1, batch_first=True)

    def forward(
        self, eps: torch.Tensor, state: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        return self.gru(eps, state)


class FrameDecoder(nn.Module):
    """Latent + identity skips -> frame, via stride-2 transposed convs.

    The latent is projected to the deepest 1x1 feature map; each level
    concatenates the equally sized encoder skip before upsampling.  The
    final layer has no batch norm and is tanh-bounded.
    """

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        chans = cfg.image_channels  # shallow -> deep
        self.project = nn.Linear(LATENT_DIM, chans[-1])
        blocks = []
        prev = chans[-1]
        for level in range(cfg.depth - 1, -1, -1):
            skip_ch = chans[level]
            out_ch = chans[level - 1] if level > 0 else 3
            if level > 0:
                blocks.append(
                    nn.Sequential(
                        nn.ConvTranspose2d(prev + skip_ch, out_ch, 4, stride=2, padding=1),
                        nn.BatchNorm2d(out_ch),
                        nn.ReLU(inplace=True),
                    )
                )
            else:
                blocks.append(
                    nn.Sequential(
                        nn.ConvTranspose2d(prev + skip_ch, out_ch, 4, stride=2, padding=1),
                        nn.Tanh(),
                    )
                )
            prev = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.apply(_init_weights)

    def forward(self, latent: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        if latent.shape[-1] != LATENT_DIM:
            raise ValueError(f"latent must be {LATENT_DIM}-dim, got {latent.shape[-1]}")
        if len(skips) != self.cfg.depth:
            raise ValueError(f"need {self.cfg.depth} skips, got {len(skips)}")
        x = self.project(latent).unsqueeze(-1).unsqueeze(-1)
        for i, block in enumerate(self.blocks):
            skip = skips[self.cfg.depth - 1 - i]
            if skip.shape[-2:] != x.shape[-2:]:
                raise ValueError(
                    f"skip {self.cfg.depth - 1 - i} is {tuple(skip.shape[-2:])}, "
                    f"decoder expects {tuple(x.shape[-2:])}"
                )
            x = block(torch.cat([x, skip], dim=-3))
        return x


class Generator(nn.Module):
    """still + audio windows (+ noise draws) -> video frames.

    forward() is the batched training path: it folds (B, T) through the
    per-frame networks and runs the GRUs over full sequences.  stream()
    is the frame-by-frame inference path; with the module in eval mode
    both produce identical pixels.
    """

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.identity = IdentityEncoder(cfg)
        self.audio = AudioEncoder(cfg)
        self.context = ContextEncoder()
        self.noise = NoiseGenerator()
        self.decoder = FrameDecoder(cfg)

    def forward(
        self, stills: torch.Tensor, windows: torch.Tensor, eps: torch.Tensor
    ) -> torch.Tensor:
        """stills (B,3,H,W), windows (B,T,L), eps (B,T,10) -> (B,T,3,H,W)."""
        batch, steps = windows.shape[0], windows.shape[1]
        z_id, skips = self.identity(stills)
        feats = self.audio(windows.reshape(batch * steps, -1)).reshape(batch, steps, -1)
        z_c, _ = self.context(feats)
        z_n, _ = self.noise(eps)
        latent = torch.cat([z_id.unsqueeze(1).expand(-1, steps, -1), z_c, z_n], dim=-1)
        folded_skips = [
            s.unsqueeze(1).expand(-1, steps, *s.shape[1:]).reshape(batch * steps, *s.shape[1:])
            for s in skips
        ]
        frames = self.decoder(latent.reshape(batch * steps, -1), folded_skips)
        return frames.reshape(batch, steps, *frames.shape[1:])

    def stream(self, still: np.ndarray, seed: int | None = None) -> "GeneratorStream":
        return GeneratorStream(self, still, seed)

    @torch.no_grad()
    def generate_sequence(
        self, still: np.ndarray, audio: AudioFrameSeq, seed: int | None = None
    ) -> VideoSeq:
        """One output frame per audio window, stepwise (constant memory/step)."""
        was_training = self.training
        self.eval()
        try:
            stream = self.stream(still, seed)
            frames = np.stack([stream.step(w) for w in audio.frames])
        finally:
            self.train(was_training)
        fps = int(round(audio.source_rate / audio.stride))
        return VideoSeq(pixels=frames, fps=fps)


class GeneratorStream:
    """Per-sequence inference state: identity encoded once, recurrent
    states threaded across step() calls.  Frame t is returned before
    window t+1 is touched."""

    def __init__(self, gen: Generator, still: np.ndarray, seed: int | None):
        self._gen = gen
        self._rng = torch.Generator()
        if seed is None:
            self._rng.seed()
        else:
            self._rng.manual_seed(seed)
        dtype = next(gen.parameters()).dtype
        with torch.no_grad():
            batch = frames_to_tensor(np.asarray(still)).unsqueeze(0).to(dtype)
            self._z_id, self._skips = gen.identity(batch)
        self._h_ctx: torch.Tensor | None = None
        self._h_noise: torch.Tensor | None = None
        self.steps_done = 0

    @torch.no_grad()
    def step(self, window: np.ndarray, eps: np.ndarray | torch.Tensor | None = None) -> np.ndarray:
        """Decode the next frame; eps overrides the internal noise draw."""
        gen = self._gen
        dtype = self._z_id.dtype
        w = torch.as_tensor(np.asarray(window), dtype=dtype).reshape(1, -1)
        feat = gen.audio(w).unsqueeze(1)  # (1,1,256)
        z_c, self._h_ctx = gen.context(feat, self._h_ctx)
        if eps is None:
            eps = draw_noise((1, 1, NOISE_DIM), gen.cfg.noise_variance, self._rng).to(dtype)
        else:
            eps = torch.as_tensor(np.asarray(eps), dtype=dtype).reshape(1, 1, NOISE_DIM)
        z_n, self._h_noise = gen.noise(eps, self._h_noise)
        latent = torch.cat([self._z_id, z_c[:, 0], z_n[:, 0]], dim=-1)
        frame = gen.decoder(latent, self._skips)
        self.steps_done += 1
        return tensor_to_frames(frame[0])


class FrameDiscriminator(nn.Module):
    """Is this frame a real frame of the person in the condition still?

    Input is the target frame channel-concatenated with the condition
    (6 channels); a stride-2 conv pyramid to 1x1 and a linear head give
    the probability.  No batch norm on the first layer.
    """

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        blocks = []
        prev = 6
        for i, ch in enumerate(cfg.image_channels):
            layers: list[nn.Module] = [nn.Conv2d(prev, ch, 4, stride=2, padding=1)]
            if i > 0:
                layers.append(nn.BatchNorm2d(ch))
            layers.append(nn.ReLU(inplace=True))
            blocks.append(nn.Sequential(*layers))
            prev = ch
        self.blocks = nn.Sequential(*blocks)
        self.head = nn.Linear(prev, 1)
        self.apply(_init_weights)

    def forward(self, frames: torch.Tensor, condition: torch.Tensor) -> torch.Tensor:
        """frames, condition (B,3,H,W) -> probability (B,)."""
        if frames.shape != condition.shape:
            raise ValueError(f"shape mismatch: {tuple(frames.shape)} vs {tuple(condition.shape)}")
        if frames.shape[-3] != 3:
            raise ValueError(f"expected 3-channel frames, got {frames.shape[-3]}")
        x = self.blocks(torch.cat([frames, condition], dim=-3))
        return torch.sigmoid(self.head(x.flatten(1))).squeeze(-1)


class SequenceDiscriminator(nn.Module):
    """Does this video move like that audio sounds?

    Each step's frame code (own conv encoder, 256-dim) is concatenated
    with an audio code from a separate waveform encoder and fed to a
    2-layer GRU; a 2-layer head classifies the final hidden state only.
    """

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.frame_enc = _ConvImageEncoder(cfg, out_dim=CTX_DIM, in_channels=3)
        self.audio_enc = AudioEncoder(cfg, out_dim=CTX_DIM)
        self.gru = nn.GRU(2 * CTX_DIM, CTX_DIM, num_layers=2, batch_first=True)
        self.head = nn.Sequential(nn.Linear(CTX_DIM, 64), nn.ReLU(inplace=True), nn.Linear(64, 1))
        self.apply(_init_weights)

    def forward(
        self,
        frames: torch.Tensor,
        windows: torch.Tensor,
        lengths: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """frames (B,T,3,H,W), windows (B,T,L) -> probability (B,).

        lengths masks padded steps: the classifier reads the hidden state
        at each sequence's true final step.
        """
        if frames.shape[1] != windows.shape[1]:
            raise ValueError(f"length mismatch: {frames.shape[1]} frames vs {windows.shape[1]} windows")
        batch, steps = frames.shape[0], frames.shape[1]
        f_codes, _ = self.frame_enc(frames.reshape(batch * steps, *frames.shape[2:]))
        a_codes = self.audio_enc(windows.reshape(batch * steps, -1))
        joint = torch.cat([f_codes, a_codes], dim=-1).reshape(batch, steps, -1)
        out, _ = self.gru(joint)
        if lengths is None:
            last = out[:, -1]
        else:
            idx = (lengths.to(torch.long) - 1).clamp(min=0)
            last = out[torch.arange(batch), idx]
        return torch.sigmoid(self.head(last)).squeeze(-1)


def sample_real_fake_pair(
    video: VideoSeq, generated: VideoSeq, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Uniformly sample one timestep; condition is the real video's first
    frame.  The same index selects the real and the fake frame."""
    if len(video) != len(generated):
        raise ValueError(f"length mismatch: {len(video)} vs {len(generated)}")
    t = int(rng.integers(len(video)))
    return video.pixels[t], generated.pixels[t], video.pixels[0], t
