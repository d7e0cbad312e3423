"""A discretised transport problem: grid, densities, target and scheme parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary import GlobalSystem, assemble
from .density import DensityPair
from .grid import Grid2D
from .scheme import SchemeParams
from .target import TargetShape


@dataclass(eq=False)
class OTProblem:
    grid: Grid2D
    pair: DensityPair
    shape: TargetShape
    params: SchemeParams
    source_mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def system(self, u, with_jacobian: bool = True, clamp: bool = True, boundary=None) -> GlobalSystem:
        return assemble(u, self.grid, self.pair, self.shape, self.params,
                        with_jacobian=with_jacobian, clamp=clamp, boundary=boundary)

    @property
    def mask(self) -> np.ndarray:
        if self.source_mask is None:
            return self.pair.rho_x > 0
        return self.source_mask
