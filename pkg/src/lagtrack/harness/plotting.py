"""Static SVG plots from telemetry files.  Output is byte-deterministic."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .telemetry import Telemetry, read_telemetry

__all__ = ["plot_telemetry"]

_SAVE_KW = dict(format="svg", metadata={"Date": None})


def _style():
    plt.rcParams["svg.hashsalt"] = "lagtrack"


def plot_telemetry(telemetry_csv, out_dir=None) -> list[Path]:
    """Tracking, error-norm, and certificate plots; returns written paths."""
    _style()
    telemetry = telemetry_csv if isinstance(telemetry_csv, Telemetry) else read_telemetry(telemetry_csv)
    out = Path(out_dir) if out_dir is not None else Path(telemetry_csv).parent
    out.mkdir(parents=True, exist_ok=True)
    written = []

    n = telemetry.n
    fig, axes = plt.subplots(n, 1, figsize=(7, 2.2 * n), sharex=True, squeeze=False)
    for i in range(n):
        ax = axes[i][0]
        ax.plot(telemetry.t, telemetry.q_des[:, i], "k--", lw=1.0, label="target")
        ax.plot(telemetry.t, telemetry.q[:, i], lw=1.2, label="actual")
        ax.set_ylabel(f"q{i+1} [rad]")
        ax.grid(alpha=0.3)
    axes[0][0].legend(loc="upper right", fontsize=8)
    axes[-1][0].set_xlabel("t [s]")
    fig.tight_layout()
    path = out / "tracking.svg"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 2.6))
    ax.plot(telemetry.t, telemetry.err, lw=1.2)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("|q_d - q| [rad]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "error.svg"
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    written.append(path)

    if np.any(np.isfinite(telemetry.v)):
        fig, axes = plt.subplots(2, 1, figsize=(7, 4.4), sharex=True)
        axes[0].plot(telemetry.t, telemetry.v, lw=1.2)
        axes[0].set_ylabel("V")
        axes[0].grid(alpha=0.3)
        axes[1].plot(telemetry.t, telemetry.vdot_meas, lw=0.9, label="measured")
        axes[1].plot(telemetry.t, telemetry.vdot_pred, lw=0.9, label="predicted")
        axes[1].set_ylabel("dV/dt")
        axes[1].set_xlabel("t [s]")
        axes[1].legend(loc="upper right", fontsize=8)
        axes[1].grid(alpha=0.3)
        fig.tight_layout()
        path = out / "certificate.svg"
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)
        written.append(path)

    return written
