"""Accepted-region geometry shared by the sampling, certify and validate layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

DISS_ABS_DIFF = "abs-diff"
DISS_GROUPED_L2 = "grouped-l2"


@dataclass(frozen=True)
class AcceptRegion:
    """Per-output acceptance intervals around a reference output.

    For the default abs-diff dissimilarity the region is the box
    [y - eps_y, y + eps_y].  The grouped-l2 variant accepts a coordinate when
    its whole group lies within l2 distance eps of the reference; groups must
    partition the output indices and share one eps value per group.
    """

    y: np.ndarray
    eps_y: np.ndarray
    diss: str = DISS_ABS_DIFF
    groups: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        eps = np.asarray(self.eps_y, dtype=float)
        if eps.ndim == 0:
            eps = np.full(y.shape, float(eps))
        if eps.shape != y.shape:
            raise DomainError("eps_y must be a scalar or match the output dimension")
        if np.any(eps <= 0.0) or not np.all(np.isfinite(eps)):
            raise DomainError("eps_y must be positive and finite")
        if self.diss not in (DISS_ABS_DIFF, DISS_GROUPED_L2):
            raise DomainError(f"unknown dissimilarity kind {self.diss!r}")
        groups = self.groups
        if self.diss == DISS_GROUPED_L2:
            if groups is None:
                raise DomainError("grouped-l2 requires group index sets")
            groups = tuple(tuple(int(i) for i in g) for g in groups)
            seen = sorted(i for g in groups for i in g)
            if seen != list(range(y.shape[0])):
                raise DomainError("groups must partition the output indices")
            for g in groups:
                if len({float(eps[i]) for i in g}) != 1:
                    raise DomainError("grouped-l2 needs one eps value per group")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eps_y", eps)
        object.__setattr__(self, "groups", groups)

    @property
    def t(self) -> int:
        return self.y.shape[0]

    @property
    def l_b(self) -> np.ndarray:
        return self.y - self.eps_y

    @property
    def u_b(self) -> np.ndarray:
        return self.y + self.eps_y

    def accept_matrix(self, outputs: np.ndarray) -> np.ndarray:
        """Boolean acceptance per output coordinate; outputs has shape (..., t)."""
        outputs = np.asarray(outputs, dtype=float)
        if outputs.shape[-1] != self.t:
            raise DomainError("outputs do not match the region dimension")
        if self.diss == DISS_ABS_DIFF:
            return np.abs(outputs - self.y) <= self.eps_y
        accept = np.empty(outputs.shape, dtype=bool)
        for g in self.groups:
            idx = list(g)
            dist = np.linalg.norm(outputs[..., idx] - self.y[idx], axis=-1)
            accept[..., idx] = (dist <= self.eps_y[idx[0]])[..., None]
        return accept

    @classmethod
    def from_bounds(cls, l_b, u_b) -> "AcceptRegion":
        """Interval region built from explicit bounds (abs-diff only)."""
        l_b = np.asarray(l_b, dtype=float)
        u_b = np.asarray(u_b, dtype=float)
        return cls(y=(l_b + u_b) / 2.0, eps_y=(u_b - l_b) / 2.0)
