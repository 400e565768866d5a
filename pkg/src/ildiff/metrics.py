"""Alpha-matte quality metrics.

PSNR and SSIM follow the usual definitions (SSIM with a uniform 8x8 window,
stride 1). ``flicker_index`` and ``hole_residue`` quantify temporal
instability and spurious alpha inside semi-open holes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset_io import FrameClip
from .errors import ParameterError, ShapeError, SizeError, UndefinedMetricError

PSNR_INF = math.inf
SSIM_WINDOW = 8


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``PSNR_INF`` for identical inputs."""
    a, b = _pair(a, b)
    if peak <= 0:
        raise ParameterError("peak must be positive")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_INF
    return float(10.0 * np.log10(peak * peak / mse))


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean SSIM over all 8x8 windows of two single-channel images."""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ShapeError(f"ssim expects a single-channel 2-D image, got shape {a.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise SizeError(f"image {a.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    wa = sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    wb = sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _alpha(clip) -> np.ndarray:
    if isinstance(clip, FrameClip):
        return clip.alpha.astype(np.float64)
    arr = np.asarray(clip, dtype=np.float64)
    if arr.ndim == 4 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.ndim != 3:
        raise ShapeError(f"expected (N, H, W) alpha, got {arr.shape}")
    return arr


def flicker_index(alpha, gt_alpha) -> float:
    """Mean absolute excess temporal change of ``alpha`` relative to ``gt_alpha``.

    For consecutive frames, compares the frame difference of the prediction
    with that of the ground truth; 0 when the dynamics agree.
    """
    p, g = _pair(_alpha(alpha), _alpha(gt_alpha))
    if p.shape[0] < 2:
        raise SizeError("flicker_index needs at least 2 frames")
    dp = np.diff(p, axis=0)
    dg = np.diff(g, axis=0)
    return float(np.mean(np.abs(dp - dg)))


def hole_residue(pred_alpha, gt_alpha, hole_mask) -> float:
    """Mean predicted alpha over pixels inside semi-open holes."""
    p, _ = _pair(_alpha(pred_alpha), _alpha(gt_alpha))
    m = _alpha(hole_mask) > 0.5
    if m.shape != p.shape:
        raise ShapeError(f"hole mask {m.shape} does not match prediction {p.shape}")
    if not m.any():
        raise UndefinedMetricError("hole mask is empty")
    return float(p[m].mean())


def finite_mean(values) -> tuple[float, int]:
    """Mean over finite entries plus the number of +inf entries excluded.

    All-infinite input yields ``PSNR_INF``.
    """
    vals = [v for v in values if not math.isinf(v)]
    n_inf = len(values) - len(vals)
    if not vals:
        return PSNR_INF, n_inf
    return sum(vals) / len(vals), n_inf


@dataclass
class ClipReport:
    psnr_per_frame: list[float]
    ssim_per_frame: list[float]
    psnr_mean: float
    ssim_mean: float
    flicker: float
    hole_residue: float | None = None
    psnr_inf_count: int = 0
    id: str | None = None
    extra: dict = field(default_factory=dict)

    @staticmethod
    def json_value(v):
        """JSON has no infinity: +inf PSNR is written as null (and counted separately)."""
        return None if isinstance(v, float) and math.isinf(v) else v

    def to_json(self) -> dict:
        d = asdict(self)
        d["psnr_per_frame"] = [self.json_value(v) for v in self.psnr_per_frame]
        d["psnr_mean"] = self.json_value(self.psnr_mean)
        return d


def clip_metrics(pred_alpha, gt_alpha, hole_mask=None, clip_id: str | None = None) -> ClipReport:
    """Per-frame PSNR/SSIM on the alpha channel at peak 1.0, plus flicker and
    (when a non-empty hole mask is given) hole residue."""
    p, g = _pair(_alpha(pred_alpha), _alpha(gt_alpha))
    ps = [psnr(p[i], g[i], 1.0) for i in range(p.shape[0])]
    ss = [ssim(p[i], g[i], 1.0) for i in range(p.shape[0])]
    pm, n_inf = finite_mean(ps)
    flick = flicker_index(p, g) if p.shape[0] >= 2 else 0.0
    hr = None
    if hole_mask is not None and (_alpha(hole_mask) > 0.5).any():
        hr = hole_residue(p, g, hole_mask)
    return ClipReport(
        psnr_per_frame=ps,
        ssim_per_frame=ss,
        psnr_mean=pm,
        ssim_mean=sum(ss) / len(ss),
        flicker=flick,
        hole_residue=hr,
        psnr_inf_count=n_inf,
        id=clip_id,
    )


def aggregate(reports: list[ClipReport]) -> dict:
    """Dataset-level means over clips (hole residue only over clips with holes)."""
    if not reports:
        raise UndefinedMetricError("no clip reports to aggregate")
    pm, n_inf = finite_mean([r.psnr_mean for r in reports])
    holes = [r.hole_residue for r in reports if r.hole_residue is not None]
    return {
        "clips": len(reports),
        "psnr_mean": None if math.isinf(pm) else pm,
        "psnr_inf_clips": n_inf,
        "ssim_mean": sum(r.ssim_mean for r in reports) / len(reports),
        "flicker": sum(r.flicker for r in reports) / len(reports),
        "hole_residue": sum(holes) / len(holes) if holes else None,
        "hole_clips": len(holes),
    }
