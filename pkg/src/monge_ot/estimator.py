"""Scikit-learn style wrapper: fit a transport potential, transform points with its gradient."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .density import ConstantDensity, Density, FunctionDensity, make_pair
from .grid import build_grid
from .problem import OTProblem
from .scheme import SchemeParams
from .solvers import SolverConfig, solve
from .target import build_target
from .validation import map_interpolator, transport_map


class MongeAmpereTransport(TransformerMixin, BaseEstimator):
    """Optimal transport map between a gridded source density and a convex target.

    ``fit`` takes the source density sampled on an ``n x n`` grid covering
    ``bounds`` (zero outside its support). ``transform`` carries points
    through the discrete gradient of the computed potential, interpolated
    bilinearly.

    Parameters
    ----------
    target_points : array-like of shape (m, 2)
        Points on the boundary of the convex target (any order).
    target_density : callable or None
        Vectorised density on the target; ``None`` means uniform.
    bounds : (lo, hi)
        The computational square ``[lo, hi]^2``.
    n_dirs : int
        Number of support-function directions, a multiple of 4.
    """

    def __init__(self, target_points=None, target_density=None, bounds=(-0.5, 0.5), n_dirs=64,
                 delta=None, eps=None, method="newton", tol=1e-8, max_iter=None):
        self.target_points = target_points
        self.target_density = target_density
        self.bounds = bounds
        self.n_dirs = n_dirs
        self.delta = delta
        self.eps = eps
        self.method = method
        self.tol = tol
        self.max_iter = max_iter

    def _target_density(self) -> Density:
        if self.target_density is None:
            return ConstantDensity(1.0)
        if isinstance(self.target_density, Density):
            return self.target_density
        return FunctionDensity(self.target_density)

    def fit(self, X, y=None):
        rho = check_array(X, ensure_min_samples=3, ensure_min_features=3)
        if rho.shape[0] != rho.shape[1]:
            raise ValueError(f"source density must be square, got shape {rho.shape}")
        if np.any(rho < 0):
            raise ValueError("source density must be nonnegative")
        pts = check_array(self.target_points, ensure_min_samples=3)
        if pts.shape[1] != 2:
            raise ValueError("target_points must have two columns")
        grid = build_grid(rho.shape[0], tuple(self.bounds))
        shape = build_target(pts, int(self.n_dirs))
        pair = make_pair(rho, self._target_density(), shape, grid)
        params = SchemeParams.default(grid, pair, self.delta, self.eps)
        problem = OTProblem(grid, pair, shape, params)
        cfg = SolverConfig(self.method, tol=self.tol, max_iter=self.max_iter)
        u, rep = solve(cfg, problem)
        self.grid_ = grid
        self.potential_ = u
        self.report_ = rep
        self.map_ = transport_map(u, grid)
        self._interp = map_interpolator(self.map_, grid)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "potential_")
        pts = check_array(X)
        if pts.shape[1] != 2:
            raise ValueError(f"expected points with 2 coordinates, got {pts.shape[1]}")
        return self._interp(pts)
