"""Shared estimator configuration and fit-result containers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class EstimatorConfig:
    """Knobs shared by every iterative estimator.

    tol is the relative-change (or KKT, for the lasso solvers) stopping
    tolerance and must be positive. max_iter bounds outer iterations,
    inner_max_iter bounds inner solves (per-mode graphical lasso sweeps,
    per-coordinate lasso passes). init is "identity", "diagonal", or a
    warm-start value whose form depends on the estimator.
    """

    tol: float = 1e-5
    max_iter: int = 500
    inner_tol: float = None
    inner_max_iter: int = 200
    init: object = "identity"
    penalize_diagonal: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.inner_tol is None:
            self.inner_tol = self.tol
        elif not self.inner_tol > 0:
            raise ValueError(f"inner_tol must be positive, got {self.inner_tol}")
        if self.max_iter < 1 or self.inner_max_iter < 1:
            raise ValueError("iteration limits must be >= 1")


@dataclass
class FitResult:
    """Outcome of one estimator run.

    model is the fitted operator (precision for the sparse methods,
    covariance for the rearrangement methods, stated per estimator);
    factors carries the per-mode representation when one exists.
    """

    model: object
    factors: object = None
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_time_seconds: float = 0.0
    meta: dict = field(default_factory=dict)
