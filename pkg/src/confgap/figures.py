"""Matplotlib renderings of reports and sweep tables.

Every CLI report path can drop a figure next to its delimited output; these
helpers do the drawing.  The Agg backend keeps rendering headless.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_sdcd_report",
    "render_shift_sweep",
    "render_noise_sweep",
]


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sdcd_report(report, calibration, path) -> Path:
    """Histogram of target residuals with the conformance interval shaded."""
    residuals = np.asarray([r for _, r, _ in report.residuals])
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.hist(residuals, bins=min(40, max(10, len(residuals) // 5)),
            color="#4878a8", alpha=0.85, edgecolor="white")
    ax.axvspan(calibration.interval_lo, calibration.interval_hi,
               color="#76b56e", alpha=0.25,
               label=f"bound [{calibration.interval_lo:.3g}, {calibration.interval_hi:.3g}]")
    ax.axvline(0.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel("robustness residual")
    ax.set_ylabel("target samples")
    ax.set_title(f"{report.target_name}: SDCD {report.sdcd_percent:.1f}%")
    ax.legend(loc="upper right", fontsize=9)
    return _finish(fig, path)


def render_shift_sweep(result, path) -> Path:
    """SDCD and accuracy vs shift level, plus their scatter with Pearson r."""
    levels = [m[0] for m in result.level_means]
    sdcds = [m[1] for m in result.level_means]
    accs = [100.0 * m[2] for m in result.level_means]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    ax1.plot(levels, sdcds, "o-", color="#4878a8", label="SDCD (%)")
    ax1.plot(levels, accs, "s--", color="#b55b4e", label="accuracy (%)")
    ax1.set_xlabel("shift level")
    ax1.set_ylabel("percent")
    ax1.set_ylim(-2, 102)
    ax1.legend(fontsize=9)
    ax1.set_title("degradation under shift")

    pts_s = [p[2] for p in result.points]
    pts_a = [100.0 * p[3] for p in result.points]
    ax2.scatter(pts_s, pts_a, s=14, alpha=0.5, color="#4878a8")
    ax2.set_xlabel("SDCD (%)")
    ax2.set_ylabel("accuracy (%)")
    ax2.set_title(f"Pearson r = {result.pearson_r:.3f}")
    return _finish(fig, path)


def render_noise_sweep(result, path) -> Path:
    """SDCD degradation and SDCD-accuracy correlation across the PSNR sweep."""
    finite_levels = sorted({p for p, *_ in result.rows if not math.isinf(p)})

    def level_mean(level):
        vals = [s for p, _, s, _ in result.rows if p == level]
        return float(np.mean(vals))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2))
    ax1.plot(finite_levels, [level_mean(l) for l in finite_levels], "o-",
             color="#4878a8")
    ax1.invert_xaxis()
    ax1.set_xlabel("PSNR (dB)")
    ax1.set_ylabel("mean SDCD (%)")
    ax1.set_title("conformance vs feature noise")

    corr_levels = [p for p, _ in result.correlations if not math.isinf(p)]
    corr_vals = [r for p, r in result.correlations if not math.isinf(p)]
    ax2.plot(corr_levels, corr_vals, "s-", color="#b55b4e")
    ax2.invert_xaxis()
    ax2.axhline(0.0, color="k", lw=0.8, ls=":")
    ax2.set_xlabel("PSNR (dB)")
    ax2.set_ylabel("Pearson r (SDCD vs accuracy)")
    ax2.set_ylim(-1.05, 1.05)
    ax2.set_title("correlation degradation")
    return _finish(fig, path)
