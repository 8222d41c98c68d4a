"""Full- and no-reference quality metrics for generated face video.

All entry points take frames in the package convention, float RGB in
[-1, 1], and internally map to the 8-bit range [0, 255] that the metric
definitions are stated in.  Grayscale conversion uses ITU-R 601 luma
weights throughout.

| Metric | Range     | Needs reference | Higher is better |
|--------|-----------|-----------------|------------------|
| psnr   | (0, inf]  | yes             | yes              |
| ssim   | [-1, 1]   | yes             | yes              |
| fdbm   | [0, 1]    | no              | yes              |
| cpbd   | [0, 1]    | no              | yes              |
| acd    | [0, inf)  | identity still  | lower            |
| wer    | [0, inf)  | transcript      | lower            |
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from math import atan2, pi

import numpy as np
from scipy.ndimage import convolve as _ndconvolve

__all__ = [
    "psnr",
    "ssim",
    "fdbm",
    "cpbd",
    "acd",
    "wer",
    "SampleMetrics",
    "MetricsReport",
    "METRIC_COLUMNS",
]

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def _to_255(img: np.ndarray) -> np.ndarray:
    return (np.asarray(img, dtype=np.float64) + 1.0) * 127.5


def _gray255(img: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma on the 8-bit scale; accepts (H,W) or (H,W,3)."""
    img = _to_255(img)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ _LUMA_WEIGHTS
    raise ValueError(f"expected (H,W) or (H,W,3) image, got {img.shape}")


# ---------------------------------------------------------------------------
# full-reference


def psnr(a: np.ndarray, b: np.ndarray, on_luma: bool = False) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf.

    MSE is taken over all RGB channels unless on_luma is set.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if on_luma:
        err = _gray255(a) - _gray255(b)
    else:
        err = _to_255(a) - _to_255(b)
    mse = float(np.mean(np.square(err)))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(255.0**2 / mse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma**2))
    return g / g.sum()


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """Mean local structural similarity over valid window positions.

    Gaussian-weighted 11x11 windows (sigma 1.5) on grayscale, with the
    standard stabilizers C1 = (0.01*255)^2 and C2 = (0.03*255)^2.
    """
    x, y = _gray255(a), _gray255(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if min(x.shape) < window:
        raise ValueError(f"image {x.shape} smaller than {window}x{window} window")
    kernel = _gaussian_kernel(window, sigma)
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2

    def _wstats(img: np.ndarray) -> np.ndarray:
        win = np.lib.stride_tricks.sliding_window_view(img, (window, window))
        return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))

    mu_x = _wstats(x)
    mu_y = _wstats(y)
    xx = _wstats(x * x) - mu_x * mu_x
    yy = _wstats(y * y) - mu_y * mu_y
    xy = _wstats(x * y) - mu_x * mu_y
    score_map = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    )
    return float(score_map.mean())


# ---------------------------------------------------------------------------
# no-reference sharpness


def fdbm(img: np.ndarray, support_ratio: float = 1e-3) -> float:
    """Frequency-domain blur measure: fraction of DFT bins with magnitude
    above support_ratio times the spectral peak.  Blur shrinks the
    occupied support, so sharper images score higher."""
    gray = _gray255(img)
    mag = np.abs(np.fft.fftshift(np.fft.fft2(gray)))
    peak = mag.max()
    if peak == 0.0:
        return 1.0 / mag.size  # empty spectrum: only the DC bin counts
    return float(np.count_nonzero(mag > peak * support_ratio) / mag.size)


# CPBD constants from the published metric definition.
CPBD_BLOCK = 64
CPBD_BETA = 3.6
CPBD_EDGE_BLOCK_THRESHOLD = 0.002
# just-noticeable edge width: 5 px up to contrast 50, then 3 px
CPBD_WIDTH_JNB = np.concatenate([5 * np.ones(51), 3 * np.ones(205)])


def _sobel_edges(image: np.ndarray) -> np.ndarray:
    """Horizontal-gradient Sobel response, thresholded and thinned."""
    h = np.array([[1, 2, 1], [0, 0, 0], [-1, -2, -1]], dtype=np.float64)
    h /= np.sum(np.abs(h))
    strength2 = np.square(_ndconvolve(image, h.T))
    thresh2 = 2.0 * np.sqrt(np.mean(strength2))
    strength2[strength2 <= thresh2] = 0.0
    return _simple_thinning(strength2)


def _simple_thinning(strength: np.ndarray) -> np.ndarray:
    """Keep pixels that beat either horizontal or vertical neighbours."""
    n_rows, n_cols = strength.shape
    zero_col = np.zeros((n_rows, 1))
    zero_row = np.zeros((1, n_cols))
    x = (strength > np.c_[zero_col, strength[:, :-1]]) & (
        strength > np.c_[strength[:, 1:], zero_col]
    )
    y = (strength > np.r_[zero_row, strength[:-1, :]]) & (
        strength > np.r_[strength[1:, :], zero_row]
    )
    return x | y


def _marziliano_widths(edges: np.ndarray, image: np.ndarray) -> np.ndarray:
    """Per-edge width: extent of the monotone intensity ramp through each
    edge pixel, walked left and right along the gradient direction.
    Nonzero entries are widths at edge locations."""
    edge_widths = np.zeros(image.shape, dtype=np.float64)
    gradient_y, gradient_x = np.gradient(image)
    img_height, img_width = image.shape
    edge_angles = np.zeros(image.shape, dtype=np.float64)

    for row in range(img_height):
        for col in range(img_width):
            gx, gy = gradient_x[row, col], gradient_y[row, col]
            if gx != 0:
                edge_angles[row, col] = atan2(gy, gx) * (180 / pi)
            elif gy == pi / 2:
                edge_angles[row, col] = 90

    if not np.any(edge_angles):
        return edge_widths
    quantized = 45 * np.round(edge_angles / 45)

    for row in range(1, img_height - 1):
        for col in range(1, img_width - 1):
            if not edges[row, col]:
                continue
            angle = quantized[row, col]
            if angle in (180, -180):
                for margin in range(101):
                    outer = (col - 2) - margin
                    if outer < 0 or (image[row, outer] - image[row, outer + 1]) <= 0:
                        break
                width_left = margin + 1
                for margin in range(101):
                    outer = (col + 2) + margin
                    if outer >= img_width or (image[row, outer] - image[row, outer - 1]) >= 0:
                        break
                width_right = margin + 1
                edge_widths[row, col] = width_left + width_right
            elif angle == 0:
                for margin in range(101):
                    outer = (col - 2) - margin
                    if outer < 0 or (image[row, outer] - image[row, outer + 1]) >= 0:
                        break
                width_left = margin + 1
                for margin in range(101):
                    outer = (col + 2) + margin
                    if outer >= img_width or (image[row, outer] - image[row, outer - 1]) <= 0:
                        break
                width_right = margin + 1
                edge_widths[row, col] = width_left + width_right
    return edge_widths


def cpbd(img: np.ndarray) -> float:
    """Cumulative probability of blur detection, in [0, 1].

    Edges come from a thinned horizontal-gradient Sobel map; 64x64 blocks
    holding enough edge pixels contribute a per-edge blur probability
    P = 1 - exp(-(w / w_jnb)^beta) from the Marziliano width w, with the
    just-noticeable width set by block contrast.  The score is the mass of
    edges with P <= 0.63.  Images with no edge blocks score 0 and warn.
    """
    gray = _gray255(img)
    edges = _sobel_edges(gray)
    widths = _marziliano_widths(edges, gray)

    total_edges = 0
    hist = np.zeros(101, dtype=np.float64)
    for i in range(gray.shape[0] // CPBD_BLOCK):
        for j in range(gray.shape[1] // CPBD_BLOCK):
            rows = slice(CPBD_BLOCK * i, CPBD_BLOCK * (i + 1))
            cols = slice(CPBD_BLOCK * j, CPBD_BLOCK * (j + 1))
            block_edges = edges[rows, cols]
            if np.count_nonzero(block_edges) <= block_edges.size * CPBD_EDGE_BLOCK_THRESHOLD:
                continue
            block_widths = widths[rows, cols]
            block_widths = np.rot90(np.flipud(block_widths), 3)
            block_widths = block_widths[block_widths != 0]
            block = gray[rows, cols]
            contrast = int(np.max(block) - np.min(block))
            w_jnb = CPBD_WIDTH_JNB[min(contrast, len(CPBD_WIDTH_JNB) - 1)]
            probs = 1.0 - np.exp(-np.abs(block_widths / w_jnb) ** CPBD_BETA)
            for p in probs:
                hist[int(round(p * 100))] += 1
                total_edges += 1

    if total_edges == 0:
        warnings.warn("cpbd: no edges found, score 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(hist[:64].sum() / total_edges)


# ---------------------------------------------------------------------------
# identity and lip sync


def acd(still: np.ndarray, video_pixels: np.ndarray, embedder) -> float:
    """Average content distance: mean Euclidean distance between the
    embedding of the conditioning still and each generated frame's
    embedding.  Lower means identity is better preserved."""
    ref = np.asarray(embedder.embed(still), dtype=np.float64)
    dists = [
        float(np.linalg.norm(np.asarray(embedder.embed(frame), dtype=np.float64) - ref))
        for frame in video_pixels
    ]
    if not dists:
        raise ValueError("empty video")
    return float(np.mean(dists))


def wer(reference: list[str], hypothesis: list[str]) -> float:
    """Word error rate: word-level Levenshtein distance over reference length."""
    if len(reference) == 0:
        raise ValueError("reference transcript is empty")
    n, m = len(reference), len(hypothesis)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (reference[i - 1] != hypothesis[j - 1])
            dist[i, j] = min(sub, dist[i - 1, j] + 1, dist[i, j - 1] + 1)
    return float(dist[n, m]) / n


# ---------------------------------------------------------------------------
# reporting

METRIC_COLUMNS = ("psnr", "ssim", "fdbm", "cpbd", "acd", "wer")


@dataclass
class SampleMetrics:
    sample_id: str
    psnr: float = float("nan")
    ssim: float = float("nan")
    fdbm: float = float("nan")
    cpbd: float = float("nan")
    acd: float = float("nan")
    wer: float | None = None  # None when no lipreader is configured
    error: str | None = None

    def as_row(self) -> dict:
        row = {"sample_id": self.sample_id}
        for col in METRIC_COLUMNS:
            value = getattr(self, col)
            row[col] = "N/A" if value is None else value
        if self.error:
            row["error"] = self.error
        return row


@dataclass
class MetricsReport:
    rows: list[SampleMetrics] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[SampleMetrics]:
        return [r for r in self.rows if r.error]

    def aggregate(self) -> dict:
        """Column means over failure-free rows.  Infinite PSNR rows are
        excluded from the PSNR mean and disclosed under psnr_inf_count."""
        ok = [r for r in self.rows if not r.error]
        agg: dict = {"count": len(ok), "failures": len(self.failures)}
        for col in METRIC_COLUMNS:
            values = [getattr(r, col) for r in ok if getattr(r, col) is not None]
            if col == "psnr":
                finite = [v for v in values if np.isfinite(v)]
                agg["psnr_inf_count"] = len(values) - len(finite)
                values = finite
            values = [v for v in values if not np.isnan(v)]
            agg[col] = float(np.mean(values)) if values else None
        return agg

    def to_json(self) -> str:
        payload = {
            "metadata": self.metadata,
            "aggregate": self.aggregate(),
            "samples": [r.as_row() for r in self.rows],
        }
        return json.dumps(payload, indent=2, sort_keys=True, default=str)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, fieldnames=["sample_id", *METRIC_COLUMNS, "error"], extrasaction="ignore"
        )
        writer.writeheader()
        for r in self.rows:
            writer.writerow({**r.as_row(), "error": r.error or ""})
        return buf.getvalue()

    def format_table(self) -> str:
        """Fixed-width aggregate table, one row per configuration label."""
        agg = self.aggregate()
        label = str(self.metadata.get("label", "model"))
        header = f"{'config':<16}" + "".join(f"{c.upper():>10}" for c in METRIC_COLUMNS)
        cells = []
        for col in METRIC_COLUMNS:
            value = agg[col]
            cells.append(f"{'N/A':>10}" if value is None else f"{value:>10.4f}")
        return header + "\n" + f"{label:<16}" + "".join(cells)
