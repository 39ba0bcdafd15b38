"""Multi-output Gaussian-process regression with an ICM kernel.

The surrogate is a zero-mean GP over controller gains with a Matern-5/2 ARD
input kernel and an intrinsic-coregionalization output structure: the
covariance between output ``i`` at ``a`` and output ``j`` at ``b`` is
``B[i, j] * k(a, b)`` with ``B = L L^T`` kept positive semidefinite through its
lower-triangular factor. Observation noise is Gaussian and independent per
output. Hyperparameters are chosen by maximizing the log marginal likelihood
plus log hyperprior densities (MAP) with a multi-start simplex search.

The single-output case (``n_outputs == 1``) uses the same code path with the
coregionalization factor pinned to 1; it backs the scalar-BO baseline.

All linear algebra is dense: the design targets a few hundred observations at
most, where exact Cholesky solves are both fastest and simplest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize

__all__ = [
    "KernelParams",
    "CoregionalizationMatrix",
    "NoiseModel",
    "MultiOutputDataset",
    "PosteriorGaussian",
    "Hyperpriors",
    "NumericalError",
    "MapFit",
    "matern52",
    "matern52_matrix",
    "icm_cov",
    "gp_posterior",
    "posterior_batch",
    "log_marginal_likelihood",
    "log_marginal_gradient",
    "log_posterior_density",
    "fit_map",
]

SQRT5 = np.sqrt(5.0)
JITTER_START = 1e-8
JITTER_MAX = 1e-4
NOISE_BOUNDS = (1e-6, 1.0)
_LOG_2PI = np.log(2.0 * np.pi)


class NumericalError(RuntimeError):
    """Raised when a Gram matrix stays non-positive-definite after the full
    jitter escalation."""


@dataclass(frozen=True)
class KernelParams:
    """Matern-5/2 ARD kernel hyperparameters: one lengthscale per input
    dimension plus the signal standard deviation."""

    lengthscales: np.ndarray
    signal_std: float

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).reshape(-1)
        object.__setattr__(self, "lengthscales", ls)
        if not (np.all(np.isfinite(ls)) and np.all(ls > 0)):
            raise ValueError("lengthscales must be finite and strictly positive")
        if not (np.isfinite(self.signal_std) and self.signal_std > 0):
            raise ValueError("signal_std must be finite and strictly positive")


@dataclass(frozen=True)
class CoregionalizationMatrix:
    """Output-correlation structure ``B = L L^T`` stored by its
    lower-triangular factor ``L``."""

    factor: np.ndarray

    def __post_init__(self):
        fac = np.asarray(self.factor, dtype=float)
        if fac.ndim != 2 or fac.shape[0] != fac.shape[1]:
            raise ValueError("factor must be square")
        if not np.all(np.isfinite(fac)):
            raise ValueError("factor must be finite")
        fac = np.tril(fac)
        object.__setattr__(self, "factor", fac)

    @property
    def b_matrix(self) -> np.ndarray:
        return self.factor @ self.factor.T

    @property
    def n_outputs(self) -> int:
        return self.factor.shape[0]

    @classmethod
    def identity(cls, n_outputs: int) -> "CoregionalizationMatrix":
        return cls(np.eye(n_outputs))


@dataclass(frozen=True)
class NoiseModel:
    """Independent Gaussian observation-noise variance per output."""

    variances: np.ndarray

    def __post_init__(self):
        var = np.asarray(self.variances, dtype=float).reshape(-1)
        object.__setattr__(self, "variances", var)
        if not (np.all(np.isfinite(var)) and np.all(var >= 0)):
            raise ValueError("noise variances must be finite and nonnegative")


@dataclass(frozen=True)
class MultiOutputDataset:
    """Paired controller gains and (multi-output) objective observations.

    ``inputs`` has shape (n, input_dim); ``observations`` (n, n_outputs).
    In the optimization pipeline the observations are scaled objectives in
    [0, 1]; the class itself only requires finiteness.
    """

    inputs: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.atleast_2d(np.asarray(self.observations, dtype=float))
        if x.size == 0:
            x = x.reshape(0, x.shape[1] if x.ndim == 2 and x.shape[1] else 0)
        if y.size == 0:
            y = y.reshape(0, y.shape[1] if y.ndim == 2 and y.shape[1] else 0)
        if len(x) != len(y):
            raise ValueError("inputs and observations must have the same length")
        if y.size and not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite")
        if x.size and not np.all(np.isfinite(x)):
            raise ValueError("inputs must be finite")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "observations", y)

    @classmethod
    def empty(cls, input_dim: int, n_outputs: int) -> "MultiOutputDataset":
        return cls(np.empty((0, input_dim)), np.empty((0, n_outputs)))

    @property
    def n_points(self) -> int:
        return len(self.inputs)

    @property
    def n_outputs(self) -> int:
        return self.observations.shape[1]

    def add(self, x, y) -> "MultiOutputDataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        y = np.asarray(y, dtype=float).reshape(1, -1)
        if self.n_points == 0:
            return MultiOutputDataset(x, y)
        return MultiOutputDataset(
            np.vstack([self.inputs, x]), np.vstack([self.observations, y])
        )

    def stacked_observations(self) -> np.ndarray:
        """Observations flattened output-major: all of output 0, then 1, ..."""
        return self.observations.T.reshape(-1)


@dataclass(frozen=True)
class PosteriorGaussian:
    """Predictive distribution of the outputs at one query input."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if not np.all(np.isfinite(mean)):
            raise ValueError("posterior mean must be finite")
        if np.min(np.linalg.eigvalsh(cov)) < -1e-8:
            raise ValueError("posterior covariance is not PSD within tolerance")

    @property
    def marginal_variances(self) -> np.ndarray:
        return np.clip(np.diag(self.cov), 0.0, None)


@dataclass(frozen=True)
class Hyperpriors:
    """Log-space hyperprior parameters for MAP estimation.

    Lengthscales and the signal standard deviation carry lognormal priors
    (parameters of the underlying normal); coregionalization factor entries
    carry a standard normal; the noise variances are left flat.
    """

    lengthscale: tuple = (1.0, 3.0)
    signal_std: tuple = (0.35, 1.0)
    coreg_entry: tuple = (0.0, 1.0)

    @staticmethod
    def _lognormal_logpdf(x, mu, sigma):
        return -np.log(x) - np.log(sigma) - 0.5 * _LOG_2PI - (np.log(x) - mu) ** 2 / (2 * sigma**2)

    @staticmethod
    def _normal_logpdf(x, mu, sigma):
        return -np.log(sigma) - 0.5 * _LOG_2PI - (x - mu) ** 2 / (2 * sigma**2)

    def log_density(self, params: KernelParams, coreg: CoregionalizationMatrix | None) -> float:
        total = float(
            np.sum(self._lognormal_logpdf(params.lengthscales, *self.lengthscale))
        )
        total += float(self._lognormal_logpdf(params.signal_std, *self.signal_std))
        if coreg is not None and coreg.n_outputs > 1:
            tril = coreg.factor[np.tril_indices(coreg.n_outputs)]
            total += float(np.sum(self._normal_logpdf(tril, *self.coreg_entry)))
        return total


# ---------------------------------------------------------------------------
# Kernels


def _scaled_sqdist(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    sa = a / lengthscales
    sb = b / lengthscales
    d2 = (
        np.sum(sa**2, axis=1)[:, None]
        + np.sum(sb**2, axis=1)[None, :]
        - 2.0 * sa @ sb.T
    )
    return np.clip(d2, 0.0, None)


def matern52_matrix(a, b, params: KernelParams) -> np.ndarray:
    """Matern-5/2 ARD kernel matrix between two point sets."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("kernel inputs must be finite")
    r = np.sqrt(_scaled_sqdist(a, b, params.lengthscales))
    return params.signal_std**2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * r**2) * np.exp(-SQRT5 * r)


def matern52(a, b, params: KernelParams) -> float:
    """Matern-5/2 ARD kernel between two single inputs."""
    a = np.asarray(a, dtype=float).reshape(1, -1)
    b = np.asarray(b, dtype=float).reshape(1, -1)
    return float(matern52_matrix(a, b, params)[0, 0])


def icm_cov(a, b, i: int, j: int, params: KernelParams, coreg: CoregionalizationMatrix) -> float:
    """ICM covariance between output ``i`` at ``a`` and output ``j`` at ``b``."""
    n = coreg.n_outputs
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"output index out of range for {n} outputs")
    return float(coreg.b_matrix[i, j] * matern52(a, b, params))


# ---------------------------------------------------------------------------
# Posterior inference


def _gram(dataset: MultiOutputDataset, params: KernelParams,
          coreg: CoregionalizationMatrix, noise: NoiseModel) -> np.ndarray:
    """Dense (n_outputs*N) x (n_outputs*N) training covariance, output-major."""
    kx = matern52_matrix(dataset.inputs, dataset.inputs, params)
    g = np.kron(coreg.b_matrix, kx)
    g += np.kron(np.diag(noise.variances), np.eye(dataset.n_points))
    return g


def _chol_with_jitter(g: np.ndarray):
    """Cholesky with escalating diagonal jitter; raises NumericalError when
    the matrix stays indefinite at the maximum jitter."""
    jitter = JITTER_START
    eye = np.eye(len(g))
    while True:
        try:
            return cho_factor(g + jitter * eye, lower=True)
        except np.linalg.LinAlgError:
            pass
        if jitter >= JITTER_MAX:
            diag = np.diag(g)
            raise NumericalError(
                f"Gram matrix of size {len(g)} is not positive definite even "
                f"with jitter {jitter:g} (diagonal range [{diag.min():.3g}, "
                f"{diag.max():.3g}]); the model is too ill-conditioned"
            )
        jitter *= 10.0


def gp_posterior(dataset: MultiOutputDataset, query, params: KernelParams,
                 coreg: CoregionalizationMatrix, noise: NoiseModel) -> PosteriorGaussian:
    """Exact multi-output posterior at a single query input.

    With an empty dataset this returns the prior: zero mean and covariance
    ``B * k(q, q)``.
    """
    b = coreg.b_matrix
    d = coreg.n_outputs
    query = np.asarray(query, dtype=float).reshape(1, -1)
    prior_cov = b * float(matern52_matrix(query, query, params)[0, 0])
    if dataset.n_points == 0:
        return PosteriorGaussian(np.zeros(d), prior_cov)

    cf = _chol_with_jitter(_gram(dataset, params, coreg, noise))
    ybar = dataset.stacked_observations()
    alpha = cho_solve(cf, ybar)

    kq = matern52_matrix(query, dataset.inputs, params).reshape(-1)  # (N,)
    kstar_t = np.kron(b, kq[:, None])  # (N*d, d); column i holds output i's cross-cov
    mean = kstar_t.T @ alpha
    v = solve_triangular(cf[0], kstar_t, lower=True)
    cov = prior_cov - v.T @ v
    return PosteriorGaussian(mean, cov)


def posterior_batch(dataset: MultiOutputDataset, queries, params: KernelParams,
                    coreg: CoregionalizationMatrix, noise: NoiseModel):
    """Posterior means and marginal variances at many query inputs.

    Returns ``(means, variances)`` of shape (m, n_outputs). Shares one
    Cholesky factorization across the whole batch; this is the acquisition
    hot path.
    """
    b = coreg.b_matrix
    d = coreg.n_outputs
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    m = len(queries)
    k_qq = params.signal_std**2
    if dataset.n_points == 0:
        return np.zeros((m, d)), np.tile(np.diag(b) * k_qq, (m, 1))

    n = dataset.n_points
    cf = _chol_with_jitter(_gram(dataset, params, coreg, noise))
    alpha = cho_solve(cf, dataset.stacked_observations())

    kq = matern52_matrix(queries, dataset.inputs, params)  # (m, N)
    means = (kq @ alpha.reshape(d, n).T) @ b.T

    # For variances, solve L R_j = e_j (x) kq^T per output block and contract
    # with B on both sides.
    r = np.empty((d, d * n, m))
    for j in range(d):
        block = np.zeros((d * n, m))
        block[j * n:(j + 1) * n, :] = kq.T
        r[j] = solve_triangular(cf[0], block, lower=True)
    q = np.einsum("jkm,lkm->mjl", r, r)  # (m, d, d)
    variances = np.diag(b) * k_qq - np.einsum("ij,mjl,il->mi", b, q, b)
    return means, np.clip(variances, 0.0, None)


# ---------------------------------------------------------------------------
# Marginal likelihood, gradient, MAP fitting


def log_marginal_likelihood(dataset: MultiOutputDataset, params: KernelParams,
                            coreg: CoregionalizationMatrix, noise: NoiseModel) -> float:
    """Gaussian log marginal likelihood of the stacked observations."""
    if dataset.n_points == 0:
        raise ValueError("log marginal likelihood needs a nonempty dataset")
    cf = _chol_with_jitter(_gram(dataset, params, coreg, noise))
    ybar = dataset.stacked_observations()
    alpha = cho_solve(cf, ybar)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return float(-0.5 * ybar @ alpha - 0.5 * logdet - 0.5 * len(ybar) * _LOG_2PI)


def log_posterior_density(dataset: MultiOutputDataset, params: KernelParams,
                          coreg: CoregionalizationMatrix, noise: NoiseModel,
                          priors: Hyperpriors) -> float:
    """MAP objective: log marginal likelihood plus log hyperprior density."""
    if dataset.n_points == 0:
        raise ValueError("log posterior density needs a nonempty dataset")
    return log_marginal_likelihood(dataset, params, coreg, noise) + priors.log_density(
        params, coreg
    )


def _matern52_dlog_lengthscale(x: np.ndarray, params: KernelParams, dim: int) -> np.ndarray:
    """d k(x, x) / d log lengthscale[dim], elementwise over the Gram matrix."""
    r = np.sqrt(_scaled_sqdist(x, x, params.lengthscales))
    delta2 = (x[:, dim][:, None] - x[:, dim][None, :]) ** 2
    return (
        params.signal_std**2
        * (5.0 / 3.0)
        * (1.0 + SQRT5 * r)
        * np.exp(-SQRT5 * r)
        * delta2
        / params.lengthscales[dim] ** 2
    )


def log_marginal_gradient(dataset: MultiOutputDataset, params: KernelParams,
                          coreg: CoregionalizationMatrix, noise: NoiseModel) -> np.ndarray:
    """Analytic gradient of the log marginal likelihood.

    Ordered like the packed parameter vector: log-lengthscales, log signal
    std, lower-triangular coregionalization entries (row-major, only for
    multi-output models), log noise variances.
    """
    x = dataset.inputs
    n = dataset.n_points
    d = coreg.n_outputs
    b = coreg.b_matrix
    kx = matern52_matrix(x, x, params)

    cf = _chol_with_jitter(_gram(dataset, params, coreg, noise))
    ybar = dataset.stacked_observations()
    alpha = cho_solve(cf, ybar)
    ginv = cho_solve(cf, np.eye(d * n))

    def term(dg: np.ndarray) -> float:
        return float(0.5 * alpha @ dg @ alpha - 0.5 * np.trace(ginv @ dg))

    grads = []
    for dim in range(x.shape[1]):
        grads.append(term(np.kron(b, _matern52_dlog_lengthscale(x, params, dim))))
    grads.append(term(np.kron(b, 2.0 * kx)))
    if d > 1:
        lfac = coreg.factor
        for i, j in zip(*np.tril_indices(d)):
            e = np.zeros((d, d))
            e[i, j] = 1.0
            db = e @ lfac.T + lfac @ e.T
            grads.append(term(np.kron(db, kx)))
    eye_n = np.eye(n)
    for i in range(d):
        e = np.zeros((d, d))
        e[i, i] = noise.variances[i]
        grads.append(term(np.kron(e, eye_n)))
    return np.array(grads)


def pack_params(params: KernelParams, coreg: CoregionalizationMatrix,
                noise: NoiseModel) -> np.ndarray:
    """Flatten hyperparameters into the MAP search vector (positives in
    log-space, factor entries raw)."""
    parts = [np.log(params.lengthscales), [np.log(params.signal_std)]]
    d = coreg.n_outputs
    if d > 1:
        parts.append(coreg.factor[np.tril_indices(d)])
    parts.append(np.log(noise.variances))
    return np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])


def unpack_params(vec: np.ndarray, input_dim: int, n_outputs: int,
                  clip_noise: bool = False):
    """Inverse of :func:`pack_params`."""
    vec = np.asarray(vec, dtype=float)
    ls = np.exp(vec[:input_dim])
    signal = float(np.exp(vec[input_dim]))
    pos = input_dim + 1
    if n_outputs > 1:
        ntril = n_outputs * (n_outputs + 1) // 2
        lfac = np.zeros((n_outputs, n_outputs))
        lfac[np.tril_indices(n_outputs)] = vec[pos:pos + ntril]
        pos += ntril
        coreg = CoregionalizationMatrix(lfac)
    else:
        coreg = CoregionalizationMatrix.identity(1)
    var = np.exp(vec[pos:pos + n_outputs])
    if clip_noise:
        var = np.clip(var, *NOISE_BOUNDS)
    return KernelParams(ls, signal), coreg, NoiseModel(var)


def _default_start(input_dim: int, n_outputs: int, priors: Hyperpriors) -> np.ndarray:
    params = KernelParams(np.full(input_dim, np.exp(priors.lengthscale[0])),
                          float(np.exp(priors.signal_std[0])))
    coreg = CoregionalizationMatrix.identity(n_outputs)
    noise = NoiseModel(np.full(n_outputs, 0.01))
    return pack_params(params, coreg, noise)


@dataclass(frozen=True)
class MapFit:
    """Result of a MAP hyperparameter fit."""

    params: KernelParams
    coreg: CoregionalizationMatrix
    noise: NoiseModel
    log_density: float
    fallback: bool = False

    def to_json(self) -> dict:
        return {
            "lengthscales": self.params.lengthscales.tolist(),
            "signal_std": self.params.signal_std,
            "coreg_factor": self.coreg.factor.tolist(),
            "noise_var": self.noise.variances.tolist(),
            "log_density": self.log_density,
            "fallback": self.fallback,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "MapFit":
        return cls(
            KernelParams(np.array(rec["lengthscales"]), float(rec["signal_std"])),
            CoregionalizationMatrix(np.array(rec["coreg_factor"])),
            NoiseModel(np.array(rec["noise_var"])),
            float(rec["log_density"]),
            bool(rec.get("fallback", False)),
        )


def fit_map(dataset: MultiOutputDataset, priors: Hyperpriors | None = None,
            restarts: int = 8, seed: int = 0, maxfev: int = 400) -> MapFit:
    """Multi-start MAP estimation of all hyperparameters.

    The first start sits at the prior medians; the rest are seeded draws
    around them. Each restart runs a Nelder-Mead simplex search in the packed
    parameter space (noise variances clipped to ``NOISE_BOUNDS``). The best
    visited point is returned, so the result's density is never below any
    start's. If every restart fails to produce a finite density the prior
    medians are returned with ``fallback=True`` and a warning.
    """
    if dataset.n_points == 0:
        raise ValueError("fit_map needs a nonempty dataset")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    priors = priors or Hyperpriors()
    input_dim = dataset.inputs.shape[1]
    d = dataset.n_outputs

    def objective(vec):
        try:
            trip = unpack_params(vec, input_dim, d, clip_noise=True)
            val = log_posterior_density(dataset, *trip, priors)
        except (NumericalError, ValueError, FloatingPointError, OverflowError):
            return np.inf
        return -val if np.isfinite(val) else np.inf

    rng = np.random.default_rng(seed)
    starts = [_default_start(input_dim, d, priors)]
    base = starts[0]
    for _ in range(restarts - 1):
        vec = base.copy()
        vec[:input_dim] = rng.normal(priors.lengthscale[0], 1.5, size=input_dim)
        vec[input_dim] = rng.normal(priors.signal_std[0], 0.75)
        pos = input_dim + 1
        if d > 1:
            ntril = d * (d + 1) // 2
            entries = rng.normal(0.0, 0.5, size=ntril)
            # bias the factor diagonal toward 1 so B starts near identity
            diag_slots = np.cumsum(np.arange(1, d + 1)) - 1
            entries[diag_slots] += 1.0
            vec[pos:pos + ntril] = entries
            pos += ntril
        vec[pos:pos + d] = rng.uniform(np.log(1e-4), np.log(0.25), size=d)
        starts.append(vec)

    best_vec, best_val = None, np.inf
    for start in starts:
        val0 = objective(start)
        if val0 < best_val:
            best_vec, best_val = start, val0
        res = minimize(objective, start, method="Nelder-Mead",
                       options={"maxfev": maxfev, "xatol": 1e-4, "fatol": 1e-6})
        if np.isfinite(res.fun) and res.fun < best_val:
            best_vec, best_val = res.x, res.fun

    if best_vec is None or not np.isfinite(best_val):
        warnings.warn("MAP fit failed on every restart; falling back to prior medians")
        trip = unpack_params(_default_start(input_dim, d, priors), input_dim, d,
                             clip_noise=True)
        return MapFit(*trip, log_density=-np.inf, fallback=True)

    trip = unpack_params(best_vec, input_dim, d, clip_noise=True)
    return MapFit(*trip, log_density=-best_val, fallback=False)
