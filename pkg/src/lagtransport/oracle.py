"""Closed-form references the numerical paths are checked against.

Everything here is independent of the trajectory integrator and the
Picard machinery: explicit formulas for the oscillatory flow family,
a small hand-rolled matrix exponential, the finite-rank (separable)
kernel solution, and pure-transport solutions for catalogue fields.
"""

from __future__ import annotations

import numpy as np

from .fields import Kernel, StructuredVectorField, separable_factors
from .grid import GridSpec

__all__ = [
    "oscillatory_position",
    "oscillatory_jacobian",
    "oscillatory_inverse",
    "period_average",
    "strong_failure_floor",
    "expm_small",
    "integrated_expm",
    "separable_solve",
    "transport_solution",
]


# --- oscillatory family b_k(x) = sin(kx)/k ---------------------------


def oscillatory_position(k: float, t: float, x) -> np.ndarray:
    """Exact flow of dx/dt = sin(kx)/k via tan(k X / 2) = e^t tan(k x / 2).

    The motion is confined between consecutive rest points m pi / k, so
    the formula is evaluated on the branch containing x.  Works for
    negative t as well, which gives the inverse flow.
    """
    x = np.asarray(x, dtype=float)
    k = float(k)
    kx = k * x
    m = np.round(kx / (2.0 * np.pi))
    theta = 0.5 * (kx - 2.0 * np.pi * m)  # in [-pi/2, pi/2]
    with np.errstate(over="ignore"):
        moved = np.arctan(np.exp(t) * np.tan(theta))
    # rest points theta = +-pi/2: tan overflows but arctan saturates there
    shift = np.where(np.abs(np.cos(theta)) < 1e-15, 0.0, moved - theta)
    return x + (2.0 / k) * shift


def oscillatory_jacobian(k: float, t: float, x) -> np.ndarray:
    """Exact label derivative dX/dx = e^t / (cos^2(kx/2) + e^{2t} sin^2(kx/2)),
    a pi-periodic function of kx."""
    half = 0.5 * float(k) * np.asarray(x, dtype=float)
    return np.exp(t) / (np.cos(half) ** 2 + np.exp(2.0 * t) * np.sin(half) ** 2)


def oscillatory_inverse(k: float, t: float, y) -> np.ndarray:
    """Exact inverse flow: run the tangent relation backward in time."""
    return oscillatory_position(k, -t, y)


def period_average(k: float, t: float, npts: int = 4096) -> float:
    """Average of the Jacobian over one spatial period.

    Integrates F(t, w) over a full period of w = kx with the trapezoid
    rule, which converges spectrally for smooth periodic integrands.
    The exact value is 1 for every t: the flow fixes all rest points, so
    each period cell maps onto itself with unit average stretch.
    """
    w = np.linspace(0.0, np.pi, npts, endpoint=False)
    vals = np.exp(t) / (np.cos(w) ** 2 + np.exp(2.0 * t) * np.sin(w) ** 2)
    return float(np.mean(vals))


def strong_failure_floor(t: float = 1.0, npts: int = 200001) -> float:
    """High-resolution quadrature of |F(t, .) - 1| over (0, 2 pi).

    The pushforward density along the flow satisfies
    ||rho_k - 1||_{L^1(0, 2pi)} = 2 int_0^pi |F - 1| F dw, and since
    int |F - 1| (F - 1) = int (F - 1)^2 >= 0, the plain |F - 1| integral
    computed here is a rigorous positive lower bound for it, uniformly
    in k."""
    w = np.linspace(0.0, 2.0 * np.pi, npts)
    vals = np.abs(
        np.exp(t) / (np.cos(w) ** 2 + np.exp(2.0 * t) * np.sin(w) ** 2) - 1.0
    )
    return float(np.trapezoid(vals, w))


# --- small dense matrix exponential -----------------------------------


def expm_small(mat: np.ndarray) -> np.ndarray:
    """exp(M) for small dense matrices by scaling-and-squaring the
    truncated Taylor series.  Fine for the handful-sized systems the
    finite-rank oracle produces."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("square matrix required")
    norm = float(np.max(np.sum(np.abs(mat), axis=1)))
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    scaled = mat / (2.0**squarings)
    out = np.eye(mat.shape[0])
    term = np.eye(mat.shape[0])
    for order in range(1, 40):
        term = term @ scaled / order
        out = out + term
        if float(np.max(np.abs(term))) < 1e-18 * max(1.0, float(np.max(np.abs(out)))):
            break
    for _ in range(squarings):
        out = out @ out
    return out


def integrated_expm(mat: np.ndarray, t: float) -> np.ndarray:
    """Phi(t) = int_0^t exp(M s) ds via the augmented block exponential
    exp([[M, I], [0, 0]] t), whose top-right block is Phi."""
    mat = np.asarray(mat, dtype=float)
    m = mat.shape[0]
    aug = np.zeros((2 * m, 2 * m))
    aug[:m, :m] = mat * t
    aug[:m, m:] = np.eye(m) * t
    return expm_small(aug)[:m, m:]


# --- finite-rank kernel reference -------------------------------------


def separable_solve(
    kernel: Kernel,
    u0_values: np.ndarray,
    grid: GridSpec,
    times: np.ndarray,
) -> np.ndarray:
    """Exact-in-time solution of the b = 0 fixed point for finite-rank kernels.

    For gamma(r, rt) = sum_i a_i(r) c_i(rt) the source closes on the
    moments m_i(t, x) = int c_i u(t, x, .) dr, which satisfy the linear
    system m' = alpha + B m with alpha_i = <c_i, u0>, B_ij = <c_i, a_j>.
    The solution m(t) = Phi(t) alpha uses the integrated exponential, and
    u(t) = u0 + sum_j a_j(r) m_j(t, x).  Inner products use the grid's
    own r quadrature, so the comparison with the Picard path isolates
    time-integration and iteration error.
    """
    if grid.j != 1:
        raise ValueError("finite-rank oracle needs j = 1")
    a_list, c_list = separable_factors(kernel)
    r = grid.r_labels()[:, 0]
    wr = grid.r_weights()
    a_vals = np.stack([np.asarray(a(r), dtype=float) for a in a_list])  # (m, Nr)
    c_vals = np.stack([np.asarray(c(r), dtype=float) for c in c_list])
    u0_values = np.asarray(u0_values, dtype=float)
    if u0_values.shape != (grid.num_x, grid.num_r):
        raise ValueError("u0_values must have shape (num_x, num_r)")
    alpha = u0_values @ (c_vals * wr).T  # (Nx, m)
    bmat = (c_vals * wr) @ a_vals.T      # (m, m)
    times = np.asarray(times, dtype=float)
    t0 = times[0]
    out = np.empty((times.size, grid.num_x, grid.num_r))
    for idx, t in enumerate(times):
        phi = integrated_expm(bmat, t - t0)
        moments = alpha @ phi.T  # (Nx, m)
        out[idx] = u0_values + moments @ a_vals
    return out


# --- pure transport closed forms ---------------------------------------


def transport_solution(
    field: StructuredVectorField,
    u0,
    t: float,
    x_pts: np.ndarray,
    r_pts: np.ndarray | None = None,
):
    """Eulerian solution of the source-free equation for catalogue fields
    with closed-form inverse flows: u(t, y) = u0(X^{-1}(t, y)).

    Supported: zero, linear, oscillatory.  `u0` is a callable of (x, r)
    (or of x alone when j = 0).
    """
    x_pts = np.asarray(x_pts, dtype=float)
    if field.j > 0:
        if r_pts is None:
            raise ValueError("r_pts required for j > 0")
        r_pts = np.asarray(r_pts, dtype=float)
    if field.name == "zero":
        back_x, back_r = x_pts, r_pts
    elif field.name == "linear":
        lam = field.params["lam"]
        mu = field.params["mu"]
        back_x = x_pts * np.exp(-lam * t)
        back_r = None if field.j == 0 else r_pts * np.exp(-mu * t)
    elif field.name == "oscillatory":
        k = field.params["k"]
        back_x = oscillatory_inverse(k, t, x_pts)
        back_r = r_pts
    else:
        raise ValueError(f"no closed-form transport solution for {field.name!r}")
    if field.j == 0:
        return np.asarray(u0(back_x), dtype=float)
    return np.asarray(u0(back_x, back_r), dtype=float)
