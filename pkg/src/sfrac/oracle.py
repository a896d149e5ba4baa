"""Independent reference computations.

Two oracles with deliberately different error budgets:

* `fractional_laplacian_spectral` — sine modes with the *continuous*
  eigenvalues (k pi / L)^2.  Gap to the discrete operator is O(h^2) plus the
  wide-stencil boundary effect; it validates the modeling, not the quadrature.
* `closed_form_P_alpha` — dense eigendecomposition of the *discrete* operator
  L = -sum A_l^2 itself (constant coefficients, where L is symmetric).  It
  shares the matrices with the quadrature path, so disagreement there can
  only come from quadrature/solver error, never discretization.

Plus `s_spectrum_probe`: the eigenvalues mu of L, reported as the points
+-sqrt(mu) on the real axis (and flagged imaginary spheres when mu < 0,
which passing coefficient sets never produce).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import RejectVariableCoefficients
from .frac import FracApplyResult
from .grid import Grid, Operators, QuatField, RealField

# eigenvalues below this (relative to the largest) are treated as the exact
# parity null mode: both channels send it to zero, matching the quadrature
# path, whose integrand annihilates that mode identically
_NULL_CUTOFF_REL = 1e-10


class SineBasis:
    """Product sine modes on a box with their continuous eigenvalues.

    Modes vanish at the boundary and diagonalize the plain second-difference
    operator exactly; against the composed wide stencil they are orthogonal
    only up to O(h^2).  Transform matrices are naive O(n^2) per axis, which
    keeps them dependency-free and bit-reproducible at desk scale.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self._mats = []
        for ax in range(grid.dims):
            n = grid.n[ax]
            k = np.arange(1, n + 1)
            # S[k-1, i-1] = sin(k i pi / (n+1)); S @ S = (n+1)/2 * I
            self._mats.append(np.sin(np.outer(k, k) * np.pi / (n + 1)))

    def eigenvalues(self) -> np.ndarray:
        """Continuous eigenvalues sum_l (k_l pi / L_l)^2, shape grid.n."""
        lam = np.zeros(self.grid.n)
        for ax, L in enumerate(self.grid.domain.lengths):
            n = self.grid.n[ax]
            k = np.arange(1, n + 1) * np.pi / L
            shape = [1] * self.grid.dims
            shape[ax] = n
            lam = lam + (k ** 2).reshape(shape)
        return lam

    def forward(self, values: np.ndarray) -> np.ndarray:
        out = np.asarray(values, dtype=float)
        for ax in range(self.grid.dims):
            n = self.grid.n[ax]
            out = np.moveaxis(
                np.tensordot(self._mats[ax] * (2.0 / (n + 1)), out,
                             axes=([1], [ax])), 0, ax)
        return out

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.asarray(coeffs, dtype=float)
        for ax in range(self.grid.dims):
            out = np.moveaxis(
                np.tensordot(self._mats[ax], out, axes=([1], [ax])), 0, ax)
        return out


def fractional_laplacian_spectral(beta: float, v: RealField) -> RealField:
    """(-Laplace)^beta v through sine modes with continuous eigenvalues."""
    basis = SineBasis(v.grid)
    c = basis.forward(v.values)
    lam = basis.eigenvalues()
    return RealField(v.grid, basis.inverse(c * lam ** beta))


def _eig_L(ops: Operators):
    lam, U = scipy.linalg.eigh(ops.dense_L())
    return lam, U


def closed_form_P_alpha(alpha: float, v: RealField,
                        ops: Operators) -> FracApplyResult:
    """Reference P_alpha for constant coefficients: scal = 1/2 L^{alpha/2} v,
    vec_l = 1/2 L^{(alpha-1)/2} (A_l v), by dense symmetric eigendecomposition
    of the discrete L (T^2 = L as an operator identity)."""
    if not ops.is_constant:
        raise RejectVariableCoefficients(
            "closed form requires constant coefficients (L symmetric)")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    g = ops.grid
    lam, U = _eig_L(ops)
    cut = _NULL_CUTOFF_REL * float(lam[-1])
    keep = lam > cut
    lam_safe = np.where(keep, lam, 1.0)
    pw_scal = np.where(keep, 0.5 * lam_safe ** (alpha / 2.0), 0.0)
    pw_vec = np.where(keep, 0.5 * lam_safe ** ((alpha - 1.0) / 2.0), 0.0)

    def mat_fun(powers, vec_flat):
        return U @ (powers * (U.T @ vec_flat))

    scal = mat_fun(pw_scal, v.flat())
    comps = np.zeros((4, *g.n))
    comps[0] = scal.reshape(g.n)
    vec_fields = []
    for ax in range(3):
        if ax < g.dims:
            av = ops.apply_A(ax, v.values).reshape(-1)
            w = mat_fun(pw_vec, av).reshape(g.n)
        else:
            w = np.zeros(g.n)
        comps[ax + 1] = w
        vec_fields.append(RealField(g, w))
    full = QuatField(g, comps)
    return FracApplyResult(full=full, scal=RealField(g, scal.reshape(g.n)),
                           vec=tuple(vec_fields), j_leak=0.0)


@dataclass(frozen=True)
class SpectrumProbe:
    """Discrete S-spectrum approximation from the eigenvalues mu of L.

    points: sorted +-sqrt(mu) for mu >= 0 (the expected case);
    sphere_radii: sqrt(|mu|) for any mu < 0, each flagging a whole 2-sphere
    |s| = r of spectral points rather than real ones;
    max_imag: largest imaginary residue of the raw eigenvalues (nonsymmetric
    L can round off the real axis; passing sets stay ~1e-12).

    Iterates like the plain list of real points.
    """

    points: tuple
    sphere_radii: tuple
    max_imag: float

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def s_spectrum_probe(profiles, grid: Grid) -> SpectrumProbe:
    """Eigenvalues mu of the dense L = -sum A_l^2, mapped to the real axis
    points +-sqrt(mu); axially symmetric by construction (s -> -s)."""
    ops = Operators(grid, tuple(profiles))
    if ops.is_constant:
        mu = scipy.linalg.eigh(ops.dense_L(), eigvals_only=True)
        max_imag = 0.0
    else:
        mu_c = scipy.linalg.eigvals(ops.dense_L())
        max_imag = float(np.max(np.abs(mu_c.imag))) if mu_c.size else 0.0
        mu = np.sort(mu_c.real)
    points = []
    spheres = []
    zero_tol = 1e-12 * max(float(np.max(np.abs(mu))), 1.0) if len(mu) else 0.0
    for m in mu:
        if m >= -zero_tol:
            r = float(np.sqrt(max(m, 0.0)))
            points.extend((-r, r))
        else:
            spheres.append(float(np.sqrt(-m)))
    return SpectrumProbe(points=tuple(sorted(points)),
                         sphere_radii=tuple(sorted(spheres)),
                         max_imag=max_imag)
