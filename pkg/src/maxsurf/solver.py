"""P1 finite element solver for the maximal and minimal surface equations.

The unknown is a piecewise-linear vertex field; dirichlet and artificial
vertices are constrained, interior vertices are free.  The weak residual of
div(sigma(grad v)) = 0 with flux sigma(g) = g / sqrt(1 -+ |g|^2) is driven
to zero by a damped Newton iteration whose linear systems are solved with
diagonally preconditioned conjugate gradients.  In the Lorentzian metric
every iterate is kept strictly spacelike: per-triangle |grad v| never
reaches 1 - sigma_min.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .lorentz import SpacelikeError
from .mesh import Mesh
from .records import fmt, write_csv, read_csv

METRICS = ("lorentz", "euclid")

LINE_SEARCH_FLOOR = 1e-12
INITIAL_MARGIN_FACTOR = 10.0  # initial guess obeys |grad| <= 1 - 10 sigma_min


class NonConvergenceError(RuntimeError):
    """Linear solve failed; carries the relative residual that was reached."""

    def __init__(self, message: str, achieved: float):
        self.achieved = float(achieved)
        super().__init__(f"{message} (relative residual {self.achieved:.3e})")


@dataclass(frozen=True)
class SolverConfig:
    metric: str = "lorentz"
    residual_tol: float = 1e-10
    max_newton: int = 50
    sigma_min: float = 1e-8
    linear_tol: float = 1e-12
    backtrack_factor: float = 0.5
    sufficient_decrease: float = 1e-4

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if not (0 < self.backtrack_factor < 1):
            raise ValueError("backtrack_factor must lie in (0, 1)")
        for name in ("residual_tol", "sigma_min", "linear_tol", "sufficient_decrease"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be at least 1")


@dataclass
class SolveReport:
    """Outcome of one solve; serialized as a flat key=value record."""

    iterations: int
    residual: float
    margin: float
    energy: float
    converged: bool
    reason: str = ""
    energy_history: list = field(default_factory=list)

    def record_items(self):
        return [
            ("iterations", self.iterations),
            ("residual", self.residual),
            ("margin", self.margin),
            ("energy", self.energy),
            ("converged", self.converged),
        ]


# ----------------------------------------------------------------------
# pointwise pieces
# ----------------------------------------------------------------------


def p1_gradient(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """(T, 2) constant gradient of the piecewise-linear interpolant."""
    values = _check_field(mesh, values)
    vals = values[mesh.triangles]
    return np.einsum("ti,tid->td", vals, mesh.basis_gradients)


def _check_field(mesh: Mesh, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.vertex_count,):
        raise ValueError("field length does not match the mesh")
    if not np.isfinite(values).all():
        raise ValueError("field contains non-finite values")
    return values


def _flux_and_density(g: np.ndarray, metric: str, sigma_min: float):
    """Flux sigma(g) and area density per triangle; guards the light cone."""
    norm2 = np.sum(g * g, axis=-1)
    if metric == "lorentz":
        limit = 1.0 - sigma_min
        if np.any(norm2 >= limit * limit):
            raise SpacelikeError(float(np.sqrt(norm2.max())))
        dens = np.sqrt(1.0 - norm2)
    else:
        dens = np.sqrt(1.0 + norm2)
    return g / dens[:, None], dens


def energy(mesh: Mesh, values: np.ndarray, config: SolverConfig) -> float:
    """Area functional sum_T area_T * density_T.

    The Lorentzian functional is concave and maximized by the solution;
    the Euclidean one is convex and minimized.
    """
    g = p1_gradient(mesh, values)
    _, dens = _flux_and_density(g, config.metric, config.sigma_min)
    return float(np.dot(mesh.areas, dens))


def _assemble_residual(mesh: Mesh, values: np.ndarray, config: SolverConfig) -> np.ndarray:
    g = p1_gradient(mesh, values)
    sigma, _ = _flux_and_density(g, config.metric, config.sigma_min)
    out = np.zeros(mesh.vertex_count)
    t = mesh.triangles
    basis = mesh.basis_gradients
    weighted = mesh.areas[:, None] * sigma
    for i in range(3):
        np.add.at(out, t[:, i], np.sum(basis[:, i, :] * weighted, axis=1))
    return out


def residual(mesh: Mesh, values: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Weak-form residual at the free (interior) vertices.

    Component for vertex i is sum_T area_T grad(phi_i) . sigma(grad v).
    """
    values = _check_field(mesh, values)
    return _assemble_residual(mesh, values, config)[mesh.interior_vertices]


def residual_norm(mesh: Mesh, values: np.ndarray, config: SolverConfig) -> float:
    """Euclidean residual norm scaled by the total mesh area."""
    r = residual(mesh, values, config)
    return float(np.linalg.norm(r) / mesh.total_area)


def _flux_jacobian(g: np.ndarray, metric: str, sigma_min: float) -> np.ndarray:
    """(T, 2, 2) derivative of the flux map at each triangle gradient."""
    norm2 = np.sum(g * g, axis=-1)
    eye = np.eye(2)
    outer = g[:, :, None] * g[:, None, :]
    if metric == "lorentz":
        limit = 1.0 - sigma_min
        if np.any(norm2 >= limit * limit):
            raise SpacelikeError(float(np.sqrt(norm2.max())))
        w3 = (1.0 - norm2) ** 1.5
        return (eye[None, :, :] * (1.0 - norm2)[:, None, None] + outer) / w3[:, None, None]
    w3 = (1.0 + norm2) ** 1.5
    return (eye[None, :, :] * (1.0 + norm2)[:, None, None] - outer) / w3[:, None, None]


def tangent_matrix(mesh: Mesh, values: np.ndarray, config: SolverConfig,
                   full: bool = False) -> csr_matrix:
    """Sparse symmetric Newton matrix K_ij = sum_T area_T grad(phi_i) . D . grad(phi_j).

    D is the flux Jacobian, positive definite in both metrics while the
    field is admissible, so K restricted to the free vertices is SPD.
    Returns the free-vertex block unless ``full`` is set.
    """
    values = _check_field(mesh, values)
    g = p1_gradient(mesh, values)
    dmat = _flux_jacobian(g, config.metric, config.sigma_min)
    basis = mesh.basis_gradients
    local = np.einsum("tid,tde,tje->tij", basis, dmat, basis)
    local *= mesh.areas[:, None, None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.vertex_count
    k = coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    if full:
        return k
    free = mesh.interior_vertices
    return k[free][:, free]


def cg_solve(operator, rhs: np.ndarray, linear_tol: float,
             max_iter: int | None = None) -> np.ndarray:
    """Conjugate gradients with Jacobi scaling for an SPD operator.

    Deterministic: fixed starting point (zero), fixed update order.  Stops
    when ||r|| <= linear_tol * ||b||; raises NonConvergenceError carrying
    the achieved relative residual if the iteration cap is hit or negative
    curvature reveals an indefinite operator.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = len(rhs)
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(n)
    if max_iter is None:
        max_iter = 10 * n + 100
    diag = None
    if hasattr(operator, "diagonal"):
        d = np.asarray(operator.diagonal(), dtype=float)
        if np.all(d > 0):
            diag = d
    x = np.zeros(n)
    r = rhs.copy()
    z = r / diag if diag is not None else r.copy()
    p = z.copy()
    rz = float(r @ z)
    for _ in range(max_iter):
        ap = operator @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise NonConvergenceError(
                "operator is not positive definite", np.linalg.norm(r) / bnorm
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= linear_tol * bnorm:
            return x
        z = r / diag if diag is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergenceError("iteration cap reached", np.linalg.norm(r) / bnorm)


# ----------------------------------------------------------------------
# nonlinear solve
# ----------------------------------------------------------------------


def _max_gradient_norm(mesh: Mesh, values: np.ndarray) -> float:
    g = p1_gradient(mesh, values)
    return float(np.sqrt(np.sum(g * g, axis=-1).max()))


def _harmonic_extension(mesh: Mesh, bc: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Solve the Laplace equation with the given constrained values."""
    laplace_cfg = replace(config, metric="euclid")
    zero = np.zeros(mesh.vertex_count)
    k_full = tangent_matrix(mesh, zero, laplace_cfg, full=True)
    free = mesh.interior_vertices
    fixed = mesh.constrained_vertices
    out = np.zeros(mesh.vertex_count)
    out[fixed] = bc[fixed]
    rhs = -k_full[free][:, fixed] @ out[fixed]
    out[free] = cg_solve(k_full[free][:, free], rhs, config.linear_tol)
    return out


def _spacelike_initial_guess(mesh: Mesh, bc: np.ndarray, config: SolverConfig):
    """Harmonic extension, pulled toward a constant until safely spacelike.

    The interior offset from the mean constrained value is scaled by the
    largest ladder factor keeping per-triangle |grad v| <= 1 - 10 sigma_min.
    Returns None when no scaling achieves that, which the caller reports as
    non-convergence (the constrained data itself is too steep).
    """
    guess = _harmonic_extension(mesh, bc, config)
    limit = 1.0 - INITIAL_MARGIN_FACTOR * config.sigma_min
    if _max_gradient_norm(mesh, guess) <= limit:
        return guess
    fixed = mesh.constrained_vertices
    free = mesh.interior_vertices
    base = np.zeros(mesh.vertex_count)
    base[fixed] = bc[fixed]
    base[free] = float(np.mean(bc[fixed]))
    offset = guess - base  # zero at constrained vertices
    t = 1.0
    while t > 1e-6:
        candidate = base + t * offset
        if _max_gradient_norm(mesh, candidate) <= limit:
            return candidate
        t *= 0.95
    candidate = base
    if _max_gradient_norm(mesh, candidate) <= limit:
        return candidate
    return None


def solve(mesh: Mesh, boundary_values: np.ndarray,
          config: SolverConfig | None = None):
    """Damped Newton iteration for the surface equation.

    Parameters
    ----------
    boundary_values : (V,) array; only entries at dirichlet and artificial
        vertices are read, interior entries are ignored.
    config : SolverConfig; defaults to the Lorentzian metric.

    Returns
    -------
    (values, report) : the vertex field and its SolveReport.  Non-convergence
    is reported, not raised: ``report.converged`` is False and the partial
    field is returned, so callers can still serialize the outcome.

    A step is accepted when the candidate stays strictly spacelike (Lorentz
    metric only) and the residual norm satisfies the sufficient-decrease
    test; the step is halved otherwise.  Convergence is declared on the
    area-scaled residual norm.
    """
    if config is None:
        config = SolverConfig()
    bc = _check_field(mesh, boundary_values)
    if len(mesh.interior_vertices) == 0:
        raise ValueError("mesh has no free vertices")

    def report_failure(values, reason, iterations):
        res = _try_residual_norm(mesh, values, config)
        return values, SolveReport(
            iterations=iterations,
            residual=res if res is not None else float("nan"),
            margin=1.0 - _max_gradient_norm(mesh, values),
            energy=_try_energy(mesh, values, config),
            converged=False,
            reason=reason,
        )

    if config.metric == "lorentz":
        values = _spacelike_initial_guess(mesh, bc, config)
        if values is None:
            fallback = np.zeros(mesh.vertex_count)
            fallback[mesh.constrained_vertices] = bc[mesh.constrained_vertices]
            fallback[mesh.interior_vertices] = float(
                np.mean(bc[mesh.constrained_vertices])
            )
            return report_failure(fallback, "no spacelike initial guess", 0)
    else:
        values = _harmonic_extension(mesh, bc, config)

    free = mesh.interior_vertices
    limit = 1.0 - config.sigma_min
    history = [energy(mesh, values, config)]
    res = residual_norm(mesh, values, config)
    iterations = 0
    while res > config.residual_tol:
        if iterations >= config.max_newton:
            _, rep = report_failure(values, "max_newton exceeded", iterations)
            rep.energy_history = history
            return values, rep
        k = tangent_matrix(mesh, values, config)
        rhs = -residual(mesh, values, config)
        try:
            direction = cg_solve(k, rhs, config.linear_tol)
        except NonConvergenceError as exc:
            _, rep = report_failure(values, f"linear solve failed: {exc}", iterations)
            rep.energy_history = history
            return values, rep
        step = 1.0
        target = None
        while step >= LINE_SEARCH_FLOOR:
            candidate = values.copy()
            candidate[free] += step * direction
            if config.metric == "lorentz" and \
                    _max_gradient_norm(mesh, candidate) >= limit:
                step *= config.backtrack_factor
                continue
            new_res = residual_norm(mesh, candidate, config)
            if new_res <= (1.0 - config.sufficient_decrease * step) * res:
                target = (candidate, new_res)
                break
            step *= config.backtrack_factor
        if target is None:
            _, rep = report_failure(values, "line search stagnation", iterations)
            rep.energy_history = history
            return values, rep
        values, res = target
        iterations += 1
        history.append(energy(mesh, values, config))

    report = SolveReport(
        iterations=iterations,
        residual=res,
        margin=1.0 - _max_gradient_norm(mesh, values),
        energy=history[-1],
        converged=True,
        energy_history=history,
    )
    return values, report


def _try_residual_norm(mesh, values, config):
    try:
        return residual_norm(mesh, values, config)
    except SpacelikeError:
        return None


def _try_energy(mesh, values, config):
    try:
        return energy(mesh, values, config)
    except SpacelikeError:
        return float("nan")


def gradient_margin(mesh: Mesh, values: np.ndarray, triangles=None) -> float:
    """Measured spacelike margin 1 - max_T |grad v| over a triangle subset.

    ``triangles`` defaults to all of them; an empty subset is an error.
    """
    values = _check_field(mesh, values)
    g = p1_gradient(mesh, values)
    if triangles is not None:
        triangles = np.asarray(triangles, dtype=np.int64)
        if len(triangles) == 0:
            raise ValueError("empty triangle subset")
        g = g[triangles]
    return float(1.0 - np.sqrt(np.sum(g * g, axis=-1).max()))


# ----------------------------------------------------------------------
# field serialization
# ----------------------------------------------------------------------

FIELD_HEADER = "vertex,x,y,value"


def save_field(mesh: Mesh, values: np.ndarray, path) -> None:
    """CSV rows vertex,x,y,value with full-precision floats."""
    values = _check_field(mesh, values)
    write_csv(path, FIELD_HEADER, [
        np.arange(mesh.vertex_count),
        mesh.vertices[:, 0],
        mesh.vertices[:, 1],
        values,
    ])


def load_field(mesh: Mesh, path) -> np.ndarray:
    """Read a field CSV and verify it matches the mesh coordinates."""
    data = read_csv(path, FIELD_HEADER)
    if len(data) != mesh.vertex_count:
        raise ValueError("field file does not match the mesh size")
    idx = data[:, 0].astype(np.int64)
    if not np.array_equal(idx, np.arange(mesh.vertex_count)):
        raise ValueError("field file has out-of-order vertex ids")
    coords = data[:, 1:3]
    scale = max(1.0, float(np.abs(mesh.vertices).max()))
    if np.abs(coords - mesh.vertices).max() > 1e-9 * scale:
        raise ValueError("field coordinates do not match the mesh")
    return data[:, 3].copy()
