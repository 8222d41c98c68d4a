"""Face-embedding and lipreading backends for the metric suite.

Identity distance (ACD) needs a face embedder and word error rate needs a
lipreader; both are external models in practice, so they hang behind two
small interfaces here.  The bundled implementations are a stub embedder
(16x16 grayscale downsample) and the toy-dataset mouth-height oracle; real
backends plug in as a command template or an HTTP endpoint.

Backend spec strings accepted by the factories:

    "stub"                    bundled stub embedder
    "toy"                     toy-dataset oracle lipreader
    "cmd:<template>"          subprocess; {png} / {dir} placeholder
    "http://..." (or https)   POST to a JSON endpoint
"""

from __future__ import annotations

import base64
import subprocess
import tempfile
from pathlib import Path
from typing import Protocol

import numpy as np

from .media import VideoSeq, write_frame_png
from .toydata import ToyGeometry, extract_mouth_heights, transcribe_mouth_heights

__all__ = [
    "FaceEmbedder",
    "Lipreader",
    "StubFaceEmbedder",
    "ToyOracleLipreader",
    "SubprocessFaceEmbedder",
    "SubprocessLipreader",
    "HttpFaceEmbedder",
    "HttpLipreader",
    "make_embedder",
    "make_lipreader",
    "BackendError",
]


class BackendError(RuntimeError):
    """An external embedder or lipreader call failed."""


class FaceEmbedder(Protocol):
    dim: int

    def embed(self, frame: np.ndarray) -> np.ndarray: ...


class Lipreader(Protocol):
    def transcribe(self, video: VideoSeq) -> list[str]: ...


class StubFaceEmbedder:
    """Deterministic test embedder: 16x16 block-mean grayscale, flattened.

    Embeddings live in [0, 1]^256, so distances are commensurable across
    image sizes.  Frame sides must be divisible by 16.
    """

    dim = 256
    _luma = np.array([0.299, 0.587, 0.114])

    def embed(self, frame: np.ndarray) -> np.ndarray:
        frame = np.asarray(frame, dtype=np.float64)
        gray = ((frame + 1.0) / 2.0) @ self._luma if frame.ndim == 3 else (frame + 1.0) / 2.0
        h, w = gray.shape
        if h % 16 or w % 16:
            raise ValueError(f"frame {h}x{w} not divisible into 16x16 cells")
        cells = gray.reshape(16, h // 16, 16, w // 16)
        return cells.mean(axis=(1, 3)).reshape(-1)


class ToyOracleLipreader:
    """Reads transcripts straight off toy-dataset mouth geometry."""

    def __init__(self, geometry: ToyGeometry | None = None):
        self._geometry = geometry

    def transcribe(self, video: VideoSeq) -> list[str]:
        geometry = self._geometry or ToyGeometry.for_size(video.height, video.width)
        heights = extract_mouth_heights(video, geometry)
        return transcribe_mouth_heights(heights, geometry)


def _run(cmd: str) -> str:
    proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
    if proc.returncode != 0:
        raise BackendError(f"backend command failed ({proc.returncode}): {cmd}\n{proc.stderr}")
    return proc.stdout


class SubprocessFaceEmbedder:
    """Runs `template` with {png} replaced by a frame path; expects the
    embedding on stdout as whitespace-separated floats."""

    def __init__(self, template: str):
        if "{png}" not in template:
            raise ValueError("embedder command template needs a {png} placeholder")
        self._template = template
        self.dim = -1  # learned from the first call

    def embed(self, frame: np.ndarray) -> np.ndarray:
        with tempfile.TemporaryDirectory() as tmp:
            png = Path(tmp) / "frame.png"
            write_frame_png(png, frame)
            out = _run(self._template.format(png=png))
        vec = np.array([float(tok) for tok in out.split()], dtype=np.float64)
        if vec.size == 0:
            raise BackendError("embedder produced no output")
        if self.dim < 0:
            self.dim = vec.size
        elif vec.size != self.dim:
            raise BackendError(f"embedding dim changed: {vec.size} != {self.dim}")
        return vec


class SubprocessLipreader:
    """Runs `template` with {dir} replaced by a directory of frame PNGs;
    expects whitespace-separated words on stdout."""

    def __init__(self, template: str):
        if "{dir}" not in template:
            raise ValueError("lipreader command template needs a {dir} placeholder")
        self._template = template

    def transcribe(self, video: VideoSeq) -> list[str]:
        with tempfile.TemporaryDirectory() as tmp:
            for t in range(len(video)):
                write_frame_png(Path(tmp) / f"frame_{t:05d}.png", video.pixels[t])
            out = _run(self._template.format(dir=tmp))
        return out.split()


def _post_json(url: str, payload: dict) -> dict:
    import requests

    resp = requests.post(url, json=payload, timeout=300)
    if resp.status_code != 200:
        raise BackendError(f"backend HTTP {resp.status_code} from {url}")
    return resp.json()


def _png_b64(frame: np.ndarray) -> str:
    with tempfile.TemporaryDirectory() as tmp:
        png = Path(tmp) / "f.png"
        write_frame_png(png, frame)
        return base64.b64encode(png.read_bytes()).decode("ascii")


class HttpFaceEmbedder:
    """POSTs {"png_base64": ...} and reads {"embedding": [floats]}."""

    def __init__(self, url: str):
        self._url = url
        self.dim = -1

    def embed(self, frame: np.ndarray) -> np.ndarray:
        reply = _post_json(self._url, {"png_base64": _png_b64(frame)})
        vec = np.asarray(reply["embedding"], dtype=np.float64)
        if self.dim < 0:
            self.dim = vec.size
        elif vec.size != self.dim:
            raise BackendError(f"embedding dim changed: {vec.size} != {self.dim}")
        return vec


class HttpLipreader:
    """POSTs {"frames_base64": [...], "fps": f} and reads {"words": [...]}."""

    def __init__(self, url: str):
        self._url = url

    def transcribe(self, video: VideoSeq) -> list[str]:
        payload = {
            "frames_base64": [_png_b64(video.pixels[t]) for t in range(len(video))],
            "fps": video.fps,
        }
        return [str(w) for w in _post_json(self._url, payload)["words"]]


def make_embedder(spec: str | None) -> FaceEmbedder | None:
    """Build an embedder from a backend spec string (see module docstring).

    None or "" yields None (ACD reported as missing); "none" likewise.
    """
    if not spec or spec == "none":
        return None
    if spec == "stub":
        return StubFaceEmbedder()
    if spec.startswith("cmd:"):
        return SubprocessFaceEmbedder(spec[4:])
    if spec.startswith(("http://", "https://")):
        return HttpFaceEmbedder(spec)
    raise ValueError(f"unknown embedder backend: {spec!r}")


def make_lipreader(spec: str | None, geometry: ToyGeometry | None = None) -> Lipreader | None:
    if not spec or spec == "none":
        return None
    if spec == "toy":
        return ToyOracleLipreader(geometry)
    if spec.startswith("cmd:"):
        return SubprocessLipreader(spec[4:])
    if spec.startswith(("http://", "https://")):
        return HttpLipreader(spec)
    raise ValueError(f"unknown lipreader backend: {spec!r}")
