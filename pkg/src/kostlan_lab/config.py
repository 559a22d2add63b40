"""Experiment configuration shared by the drivers and the command line."""
from __future__ import annotations

import os
from dataclasses import dataclass

__all__ = ["MODES", "ExperimentConfig", "worker_count"]

MODES = ("verify-norms", "certify", "flow", "systole", "moser-demo")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment run.

    ``grid_spacing`` is the spacing of the grid used for the transversality
    margin of the barrier polynomial; ``norm_spacing`` that of the coarser
    grid on which the random remainder's sup norms are certified in every
    trial.  ``truncation`` caps the chart degree evaluated on the grid, the
    dropped terms entering through a rigorous tail bound.
    """

    mode: str = "systole"
    n: int = 2
    d: int = 30
    r: int = 1
    epsilon: float = 1.0
    trials: int = 100
    seed: int = 0
    grid_spacing: float = 0.05
    rho: float = 2.0
    r_loop: float = 0.3
    time_steps: int = 40
    out_path: str | None = None
    norm_spacing: float = 0.4
    truncation: int = 40
    aragon_c: float = 1.0
    loop_vertices: int = 128
    batch: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        positive = {
            "n": self.n, "d": self.d, "r": self.r, "epsilon": self.epsilon, "grid_spacing": self.grid_spacing,
            "rho": self.rho, "r_loop": self.r_loop, "time_steps": self.time_steps,
            "norm_spacing": self.norm_spacing, "truncation": self.truncation, "aragon_c": self.aragon_c,
            "loop_vertices": self.loop_vertices, "batch": self.batch,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.trials < 0 or self.seed < 0:
            raise ValueError("trials and seed must be nonnegative")
        if self.r > self.n:
            raise ValueError("need r <= n")
        if self.mode in ("certify", "systole", "flow"):
            if self.epsilon > 1:
                raise ValueError("epsilon must lie in (0, 1]")
            if self.n != 2:
                raise ValueError(f"the {self.mode} experiment is planar: n must be 2")
            if not self.r_loop < 1:
                raise ValueError("r_loop must lie in (0, 1)")
            if not self.rho > 1:
                raise ValueError("rho must exceed 1")


def worker_count() -> int:
    """Size of the worker pool, capped by ``KOSTLAN_LAB_THREADS`` (default 1)."""
    raw = os.environ.get("KOSTLAN_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
