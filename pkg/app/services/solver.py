"""
Forward solver for the 1-D live cell / dead cell / oxygen system.

The equations are solved in nondimensional form (x/L, t/T, u/c_sat, v/c_sat,
w/w0) by the method of lines: conservative flux differencing at cell faces in
space and an adaptive implicit integrator in time. Physical units appear only
at the public boundary of this module.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.integrate import solve_ivp

from app.config import settings
from app.exceptions import NegativeDensityError, NonFiniteStateError, SolverError
from app.models.physics import (
    CalibrationParameters,
    CellProfile,
    FixedConstants,
    ScaledParameters,
    SpatialGrid,
    StateSnapshot,
    Trajectory,
    reference_parameters,
)
from app.services.corrections import (
    growth_saturation,
    migration_saturation,
    pi_consumption,
    pi_death,
    pi_go,
    pi_grow,
)

# Number of output times between t=0 and t=T (inclusive).
DEFAULT_OUTPUT_TIMES = 100

# Densities (in units of c_sat) below this floor are treated as blow-up.
NEGATIVE_FLOOR = 1e-4

# Saturation in scaled densities.
SCALED_C_SAT = 1.0


def nondimensionalize(
    theta: CalibrationParameters, consts: FixedConstants
) -> ScaledParameters:
    """
    Map physical parameters to the dimensionless groups of the solver.

    Args:
        theta: Calibration parameters in physical units
        consts: Fixed model constants

    Returns:
        ScaledParameters with every rate expressed per horizon T and every
        length per chamber length L
    """
    T, L = consts.T_horizon, consts.L
    return ScaledParameters(
        D_n=consts.D_n * T / L**2,
        chi=theta.chi * consts.w0 * T / L**2,
        rho_n=T / theta.tau_n,
        rho_d=T / consts.tau_d,
        D_O2=consts.D_O2 * T / L**2,
        alpha=consts.alpha * consts.c_sat * T / consts.w0,
        b=theta.b * consts.w0,
        j=theta.j * L / T,
        h2=consts.h2 / consts.w0,
        dh2=consts.dh2 / consts.w0,
        k_m=consts.k_m / consts.w0,
    )


def dimensionalize(
    scaled: ScaledParameters, consts: FixedConstants
) -> CalibrationParameters:
    """Inverse of :func:`nondimensionalize` for the calibrated groups."""
    T, L = consts.T_horizon, consts.L
    return CalibrationParameters(
        tau_n=T / scaled.rho_n,
        chi=scaled.chi * L**2 / (consts.w0 * T),
        b=scaled.b / consts.w0,
        j=scaled.j * T / L,
    )


def apply_multipliers(
    reference: ScaledParameters, multipliers: np.ndarray
) -> ScaledParameters:
    """Scale the calibrated groups (rho_n, chi, b, j) of ``reference``."""
    m = np.asarray(multipliers, dtype=float)
    return dataclasses.replace(
        reference,
        rho_n=reference.rho_n * m[0],
        chi=reference.chi * m[1],
        b=reference.b * m[2],
        j=reference.j * m[3],
    )


def multipliers_of(scaled: ScaledParameters, reference: ScaledParameters) -> np.ndarray:
    """Inverse of :func:`apply_multipliers`."""
    return scaled.calibration_groups() / reference.calibration_groups()


@dataclass(frozen=True)
class ProgressionSystem:
    """Semi-discrete right-hand side on a uniform grid (nondimensional)."""

    params: ScaledParameters
    n_nodes: int
    track_balance: bool = False

    @property
    def h(self) -> float:
        return 1.0 / (self.n_nodes - 1)

    @property
    def size(self) -> int:
        return 3 * self.n_nodes + (2 if self.track_balance else 0)

    @property
    def dirichlet_u(self) -> bool:
        return self.params.j == 0.0

    def split(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n_nodes
        return y[:n], y[n : 2 * n], y[2 * n : 3 * n]

    def face_flux(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """f_u = D_n u_x - chi F_go Pi_go u w_x at the n-1 interior faces."""
        p, h = self.params, self.h
        u_face = 0.5 * (u[:-1] + u[1:])
        w_face = 0.5 * (w[:-1] + w[1:])
        crowding = np.maximum(migration_saturation(u_face, SCALED_C_SAT), 0.0)
        return p.D_n * np.diff(u) / h - p.chi * crowding * pi_go(
            w_face, p.b
        ) * u_face * np.diff(w) / h

    def boundary_flux(self, u: np.ndarray) -> tuple[float, float]:
        """Robin closure u -/+ j f_u = 0 solved for f_u at x=0 and x=1."""
        if self.dirichlet_u:
            return 0.0, 0.0
        return u[0] / self.params.j, -u[-1] / self.params.j

    def growth(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        p = self.params
        room = np.maximum(growth_saturation(u, v, SCALED_C_SAT), 0.0)
        return p.rho_n * room * pi_grow(w, p.b) * u

    def death(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        p = self.params
        return p.rho_d * pi_death(w, p.h2, p.dh2) * u

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        u, v, w = self.split(y)
        for name, arr in (("u", u), ("v", v), ("w", w)):
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise NonFiniteStateError(name, int(bad[0]), time=t)

        p, h = self.params, self.h
        flux = self.face_flux(u, w)
        f_left, f_right = self.boundary_flux(u)

        transport = np.empty_like(u)
        transport[1:-1] = np.diff(flux) / h
        transport[0] = (flux[0] - f_left) / (0.5 * h)
        transport[-1] = (f_right - flux[-1]) / (0.5 * h)

        growth = self.growth(u, v, w)
        death = self.death(u, w)
        du = transport + growth - death
        if self.dirichlet_u:
            du[0] = du[-1] = 0.0

        dw = np.zeros_like(w)
        dw[1:-1] = p.D_O2 * (w[2:] - 2.0 * w[1:-1] + w[:-2]) / h**2 - p.alpha * (
            pi_consumption(w[1:-1], p.k_m) * u[1:-1]
        )

        parts = [du, death, dw]
        if self.track_balance:
            weights = trapezoid_weights(self.n_nodes)
            parts.append(np.array([weights @ growth, f_left - f_right]))
        return np.concatenate(parts)

    def jac_sparsity(self) -> sparse.csr_matrix:
        """Sparsity pattern of d(rhs)/dy for the implicit integrator."""
        n = self.n_nodes
        tri = sparse.diags([1, 1, 1], [-1, 0, 1], shape=(n, n))
        eye = sparse.identity(n)
        pattern = sparse.bmat(
            [[tri, eye, tri], [eye, None, eye], [eye, None, tri]], format="lil"
        )
        if not self.track_balance:
            return pattern.tocsr()
        full = sparse.lil_matrix((self.size, self.size))
        full[: 3 * n, : 3 * n] = pattern
        full[3 * n :, : 3 * n] = 1.0
        return full.tocsr()


def trapezoid_weights(n_nodes: int) -> np.ndarray:
    """Trapezoidal quadrature weights on the unit interval."""
    weights = np.full(n_nodes, 1.0 / (n_nodes - 1))
    weights[[0, -1]] *= 0.5
    return weights


def total_mass(u: np.ndarray, v: np.ndarray) -> float:
    """Trapezoidal integral of u + v over the unit interval (nondimensional)."""
    u = np.asarray(u, dtype=float)
    return float(trapezoid_weights(u.size) @ (u + np.asarray(v, dtype=float)))


def boundary_outflow(u: np.ndarray, scaled: ScaledParameters) -> float:
    """Net rate of live cells leaving through both ends (nondimensional)."""
    u = np.asarray(u, dtype=float)
    system = ProgressionSystem(scaled, u.size)
    f_left, f_right = system.boundary_flux(u)
    return f_left - f_right


def _nodal(profile: CellProfile | None, grid: SpatialGrid, scale: float) -> np.ndarray:
    if profile is None:
        return np.zeros(grid.n_nodes)
    values = profile.on(grid.x) / scale
    if np.any(values < 0):
        raise ValueError("Initial densities must be nonnegative")
    return values


def _as_scaled(
    theta: CalibrationParameters | ScaledParameters, consts: FixedConstants
) -> ScaledParameters:
    if isinstance(theta, ScaledParameters):
        return theta
    return nondimensionalize(theta, consts)


def solve_forward(
    theta: CalibrationParameters | ScaledParameters,
    consts: FixedConstants,
    grid: SpatialGrid,
    u0: CellProfile,
    v0: CellProfile | None = None,
    *,
    n_output: int = DEFAULT_OUTPUT_TIMES,
    rtol: float | None = None,
    atol: float | None = None,
    method: str | None = None,
    track_balance: bool = False,
) -> Trajectory:
    """
    Integrate the progression model from t=0 to the horizon.

    Args:
        theta: Physical parameters, or already scaled groups
        consts: Fixed model constants
        grid: Spatial grid on [0, L]
        u0: Initial live-cell profile (interpolated onto the grid)
        v0: Initial dead-cell profile; zero when omitted
        n_output: Number of uniformly spaced output times (t=0 and t=T included)
        rtol: Relative tolerance (nondimensional), defaults to settings
        atol: Absolute tolerance (nondimensional), defaults to settings
        method: Implicit integrator name, defaults to settings
        track_balance: Also integrate cumulative growth and boundary outflow

    Returns:
        Trajectory in physical units; ``stats`` holds solver counters and,
        with ``track_balance``, the trajectory carries nondimensional
        cumulative ``growth`` and ``outflow`` under ``stats["balance"]``

    Raises:
        SolverError: If the integrator fails (carries the failing time)
        NegativeDensityError: If a density drops below the blow-up floor
        NonFiniteStateError: If the state becomes non-finite
    """
    if not np.isclose(grid.length, consts.L):
        raise ValueError("Grid length must equal the chamber length L")
    scaled = _as_scaled(theta, consts)
    system = ProgressionSystem(scaled, grid.n_nodes, track_balance=track_balance)

    u_init = _nodal(u0, grid, consts.c_sat)
    v_init = _nodal(v0, grid, consts.c_sat)
    if system.dirichlet_u:
        u_init[[0, -1]] = 0.0
    w_init = np.ones(grid.n_nodes)
    y0 = np.concatenate([u_init, v_init, w_init])
    if track_balance:
        y0 = np.concatenate([y0, np.zeros(2)])

    t_eval = np.linspace(0.0, 1.0, n_output)
    rtol = rtol if rtol is not None else settings.SOLVER_RTOL
    atol = atol if atol is not None else settings.SOLVER_ATOL
    solution = solve_ivp(
        system.rhs,
        (0.0, 1.0),
        y0,
        method=method or settings.SOLVER_METHOD,
        t_eval=t_eval,
        rtol=rtol,
        atol=atol,
        jac_sparsity=system.jac_sparsity(),
    )
    if not solution.success:
        failing = float(solution.t[-1]) * consts.T_horizon if solution.t.size else 0.0
        raise SolverError(
            f"Integrator failed at t={failing:.6g} s: {solution.message}",
            failing_time=failing,
        )

    n = grid.n_nodes
    states = solution.y.T
    u, v, w = states[:, :n], states[:, n : 2 * n], states[:, 2 * n : 3 * n]
    for name, arr in (("live", u), ("dead", v)):
        lowest = float(arr.min())
        if lowest < -NEGATIVE_FLOOR:
            at = float(t_eval[np.argmin(arr.min(axis=1))]) * consts.T_horizon
            raise NegativeDensityError(name, lowest * consts.c_sat, at)

    stats: dict = {"nfev": int(solution.nfev), "njev": int(solution.njev)}
    if track_balance:
        stats["balance"] = {
            "growth": states[:, 3 * n].copy(),
            "outflow": states[:, 3 * n + 1].copy(),
        }
    logger.debug(
        f"Forward solve done: n={n}, nfev={solution.nfev}, njev={solution.njev}"
    )
    return Trajectory(
        times=solution.t * consts.T_horizon,
        x=grid.x,
        u=u * consts.c_sat,
        v=v * consts.c_sat,
        w=w * consts.w0,
        stats=stats,
    )


def assemble_rhs(
    state: StateSnapshot,
    theta: CalibrationParameters | ScaledParameters,
    consts: FixedConstants,
    grid: SpatialGrid,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate (du/dt, dv/dt, dw/dt) in physical units for one state.

    Raises:
        ValueError: If the state does not match the grid
        NonFiniteStateError: Naming the first non-finite node
    """
    n = grid.n_nodes
    if not (state.u.size == state.v.size == state.w.size == n):
        raise ValueError(f"State arrays must have {n} nodes")
    system = ProgressionSystem(_as_scaled(theta, consts), n)
    y = np.concatenate(
        [state.u / consts.c_sat, state.v / consts.c_sat, state.w / consts.w0]
    )
    dy = system.rhs(state.t / consts.T_horizon, y)
    du, dv, dw = system.split(dy)
    T = consts.T_horizon
    return du * consts.c_sat / T, dv * consts.c_sat / T, dw * consts.w0 / T


def model_eta(
    x_query: np.ndarray,
    theta: CalibrationParameters | ScaledParameters,
    consts: FixedConstants,
    grid: SpatialGrid,
    u0: CellProfile,
    v0: CellProfile | None = None,
    **solver_options,
) -> CellProfile:
    """
    Parametric model eta(x; theta) = u(x, T; theta).

    Args:
        x_query: Coordinates in [0, L] [cm]
        theta: Calibration parameters
        consts: Fixed constants
        grid: Spatial grid
        u0: Initial live-cell profile
        v0: Initial dead-cell profile
        **solver_options: Forwarded to :func:`solve_forward`

    Returns:
        CellProfile of the final live-cell density at ``x_query``
    """
    x_query = np.asarray(x_query, dtype=float)
    if np.any(x_query < 0) or np.any(x_query > consts.L * (1 + 1e-12)):
        raise ValueError("x_query must lie within [0, L]")
    trajectory = solve_forward(theta, consts, grid, u0, v0, **solver_options)
    final = trajectory.final()
    return CellProfile(x=x_query, u=np.interp(x_query, grid.x, final.u))


class ForwardModel:
    """
    Parametric model bound to one experiment.

    Wraps constants, grid and initial data so callers can evaluate the model
    in nondimensional form from parameter multipliers of the reference
    groups. Instances hold no mutable state and can be shared across threads.
    """

    def __init__(
        self,
        consts: FixedConstants,
        grid: SpatialGrid,
        u0: CellProfile,
        v0: CellProfile | None = None,
        reference: CalibrationParameters | None = None,
        rtol: float | None = None,
        atol: float | None = None,
    ):
        self.consts = consts
        self.grid = grid
        self.u0 = u0
        self.v0 = v0
        self.reference = reference or reference_parameters()
        self.reference_scaled = nondimensionalize(self.reference, consts)
        self.rtol = rtol
        self.atol = atol

    def scaled(self, multipliers: np.ndarray) -> ScaledParameters:
        return apply_multipliers(self.reference_scaled, multipliers)

    def physical(self, multipliers: np.ndarray) -> CalibrationParameters:
        return dimensionalize(self.scaled(multipliers), self.consts)

    def multipliers(self, theta: CalibrationParameters) -> np.ndarray:
        return multipliers_of(
            nondimensionalize(theta, self.consts), self.reference_scaled
        )

    def final_scaled(self, multipliers: np.ndarray) -> np.ndarray:
        """Final u/c_sat at the grid nodes."""
        trajectory = solve_forward(
            self.scaled(multipliers),
            self.consts,
            self.grid,
            self.u0,
            self.v0,
            n_output=2,
            rtol=self.rtol,
            atol=self.atol,
        )
        return trajectory.u[-1] / self.consts.c_sat

    def eta_scaled(self, multipliers: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """eta at nondimensional coordinates ``xi``, in units of c_sat."""
        return np.interp(xi, self.grid.xi, self.final_scaled(multipliers))

    def eta(self, theta: CalibrationParameters, x_query: np.ndarray) -> CellProfile:
        """eta in physical units."""
        return model_eta(
            x_query,
            theta,
            self.consts,
            self.grid,
            self.u0,
            self.v0,
            rtol=self.rtol,
            atol=self.atol,
        )
