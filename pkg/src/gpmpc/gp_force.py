"""Gaussian-process models of external force over TCP pose.

Each of the six wrench axes gets an independent scalar GP over the full
6-D pose (squared-exponential kernel, optional hinge prior mean for
contact). Joint output covariance is therefore diagonal. Models are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

N_POSE = 6

# Jitter escalation for the SPD factorization of K + noise*I.
_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


class FitError(RuntimeError):
    """Raised when hyperparameter fitting cannot proceed (bad scaling, NaNs)."""


@dataclass(frozen=True)
class GpHyper:
    """Kernel hyperparameters for one force axis.

    signal_var: output scale of the SE kernel [N^2]
    noise_var: observation noise variance [N^2]
    length_scales: per-pose-coordinate length scales (6,)
    """

    signal_var: float
    noise_var: float
    length_scales: np.ndarray

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=float)
        object.__setattr__(self, "length_scales", ls)
        if ls.shape != (N_POSE,):
            raise ValueError(f"length_scales must have shape ({N_POSE},)")
        if not np.all(ls > 0):
            raise ValueError("length_scales must be strictly positive")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be strictly positive")
        if self.signal_var < 0:
            raise ValueError("signal_var must be nonnegative")


@dataclass(frozen=True)
class HingeMean:
    """Piecewise-linear prior mean: offset below threshold, affine beyond.

    Evaluates c1 for x[axis] <= c3 and c1 + c2*x[axis] otherwise. The
    ``continuous`` variant instead evaluates c1 + c2*(x[axis] - c3) beyond
    the threshold so the two branches join at c3.
    """

    offset: float  # c1 [N]
    slope: float  # c2 [N/m]
    threshold: float  # c3 [m]
    axis: int
    continuous: bool = False

    def __post_init__(self):
        if not 0 <= self.axis < N_POSE:
            raise ValueError("axis must be in 0..5")

    def value(self, x):
        xi = float(np.asarray(x)[self.axis])
        if xi <= self.threshold:
            return self.offset
        if self.continuous:
            return self.offset + self.slope * (xi - self.threshold)
        return self.offset + self.slope * xi

    def grad(self, x):
        """Gradient w.r.t. pose; nonzero only on the active axis past c3."""
        g = np.zeros(N_POSE)
        if float(np.asarray(x)[self.axis]) > self.threshold:
            g[self.axis] = self.slope
        return g


def kernel_eval(x, x2, hyper: GpHyper) -> float:
    """Squared-exponential kernel between two poses."""
    d = (np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)) / hyper.length_scales
    return hyper.signal_var * math.exp(-0.5 * float(d @ d))


def hinge_mean(x, h: HingeMean) -> float:
    """Evaluate the hinge prior mean at a pose."""
    return h.value(x)


def _kernel_matrix(X, X2, hyper: GpHyper):
    A = np.asarray(X, dtype=float) / hyper.length_scales
    B = np.asarray(X2, dtype=float) / hyper.length_scales
    sq = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return hyper.signal_var * np.exp(-0.5 * sq)


def _spd_factor(K):
    """Cholesky with jitter escalation; raises FitError if all jitters fail."""
    n = K.shape[0]
    for jit in _JITTERS:
        try:
            return cho_factor(K + jit * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise FitError("kernel matrix not positive definite; check hyperparameters")


def _mean_values(X, mean_fn):
    if mean_fn is None:
        return np.zeros(len(X))
    return np.array([mean_fn.value(x) for x in np.atleast_2d(X)])


@dataclass(frozen=True)
class AxisGp:
    """Fitted (or prior) GP for a single force axis.

    The factorization of K + noise_var*I and the weight vector alpha are
    cached at construction and kept consistent with the stored data.
    """

    X: np.ndarray  # (M, 6) training poses
    y: np.ndarray  # (M,) training forces
    hyper: GpHyper
    mean_fn: HingeMean | None = None
    _chol: tuple = field(default=None, repr=False, compare=False)
    _alpha: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float)).reshape(-1, N_POSE)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if len(X) != len(y):
            raise ValueError("X and y length mismatch")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if len(X) > 0:
            K = _kernel_matrix(X, X, self.hyper) + self.hyper.noise_var * np.eye(len(X))
            chol = _spd_factor(K)
            resid = y - _mean_values(X, self.mean_fn)
            object.__setattr__(self, "_chol", chol)
            object.__setattr__(self, "_alpha", cho_solve(chol, resid))

    @property
    def n_train(self) -> int:
        return len(self.y)

    def posterior(self, x):
        """Posterior mean and variance at a pose. Prior if no data."""
        x = np.asarray(x, dtype=float)
        m = self.mean_fn.value(x) if self.mean_fn is not None else 0.0
        if self.n_train == 0:
            return m, self.hyper.signal_var
        ks = _kernel_matrix(self.X, x[None, :], self.hyper)[:, 0]
        mu = m + float(ks @ self._alpha)
        v = cho_solve(self._chol, ks)
        var = self.hyper.signal_var - float(ks @ v)
        return mu, max(var, 0.0)

    def posterior_grad(self, x):
        """Analytic d(mean)/dx and d(var)/dx at a pose, each shape (6,)."""
        x = np.asarray(x, dtype=float)
        dm = self.mean_fn.grad(x) if self.mean_fn is not None else np.zeros(N_POSE)
        if self.n_train == 0:
            return dm, np.zeros(N_POSE)
        ks = _kernel_matrix(self.X, x[None, :], self.hyper)[:, 0]
        # d k(x_i, x)/dx = k(x_i, x) * (x_i - x) / l^2, rows of (M, 6)
        dks = ks[:, None] * (self.X - x[None, :]) / self.hyper.length_scales**2
        dmean = dm + dks.T @ self._alpha
        v = cho_solve(self._chol, ks)
        dvar = -2.0 * dks.T @ v
        return dmean, dvar

    def nll(self) -> float:
        """Negative log marginal likelihood of the stored data."""
        if self.n_train == 0:
            return 0.0
        resid = self.y - _mean_values(self.X, self.mean_fn)
        L = self._chol[0]
        return (
            0.5 * float(resid @ self._alpha)
            + float(np.sum(np.log(np.diag(L))))
            + 0.5 * self.n_train * math.log(2.0 * math.pi)
        )


@dataclass(frozen=True)
class GpForceModel:
    """Bundle of six independent per-axis GPs over pose.

    Output covariance across axes is diagonal by construction.
    """

    axes: tuple  # 6 AxisGp

    def __post_init__(self):
        if len(self.axes) != N_POSE:
            raise ValueError("expected 6 per-axis models")

    def posterior(self, x):
        """Wrench mean (6,) and per-axis variance (6,) at a pose."""
        mu = np.empty(N_POSE)
        var = np.empty(N_POSE)
        for i, gp in enumerate(self.axes):
            mu[i], var[i] = gp.posterior(x)
        return mu, var

    def posterior_grad(self, x):
        """d(mean)/dx and d(var)/dx, each (6, 6): row = force axis."""
        dmu = np.empty((N_POSE, N_POSE))
        dvar = np.empty((N_POSE, N_POSE))
        for i, gp in enumerate(self.axes):
            dmu[i], dvar[i] = gp.posterior_grad(x)
        return dmu, dvar

    def estimate_stiffness(self, x, axis: int) -> float:
        """Environment stiffness [N/m] from the force-mean slope.

        A restoring contact produces a mean slope whose sign depends on the
        approach direction and force sign convention; the magnitude is what
        enters the damping bound, so |d mu_axis / d x_axis| is returned.
        """
        dmu, _ = self.axes[axis].posterior_grad(x)
        return abs(float(dmu[axis]))


# ---------------------------------------------------------------------------
# Hyperparameter fitting
# ---------------------------------------------------------------------------

# Box bounds on log-transformed kernel hyperparameters.
_LOG_SV_BOUNDS = (math.log(1e-8), math.log(1e6))
_LOG_NV_BOUNDS = (math.log(1e-8), math.log(1e4))
_LOG_LS_BOUNDS = (math.log(1e-3), math.log(1e2))


def _init_hinge(X, y, axis: int) -> HingeMean:
    """Heuristic hinge init: grid search over the kink location.

    For each candidate threshold, fit a flat level below and a line pinned
    at the kink above; keep the candidate with the smallest residual.
    Candidates cover the span of the axis, refined around the location of
    maximum |df/dx|.
    """
    xs = X[:, axis]
    order = np.argsort(xs)
    xo, yo = xs[order], y[order]
    cands = list(np.quantile(xo, np.linspace(0.05, 0.98, 24)))
    if len(xo) >= 3:
        dx = np.diff(xo)
        dy = np.diff(yo)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(np.abs(dx) > 1e-9, dy / dx, 0.0)
        k = int(np.argmax(np.abs(g)))
        cands += list(np.linspace(xo[max(k - 3, 0)], xo[k], 8))
    best = None
    for c3 in cands:
        below = xo <= c3
        n_above = len(xo) - int(np.count_nonzero(below))
        if n_above < 2:
            continue
        c1 = float(np.mean(yo[below])) if np.any(below) else 0.0
        dxa = xo[~below] - c3
        ya = yo[~below] - c1
        c2 = float(dxa @ ya / max(dxa @ dxa, 1e-18))
        resid = float(np.sum((yo[below] - c1) ** 2) + np.sum((ya - c2 * dxa) ** 2))
        if best is None or resid < best[0]:
            best = (resid, c1, c2, float(c3))
    if best is None:
        return HingeMean(offset=float(np.mean(y)), slope=0.0,
                         threshold=float(np.median(xo)) - 1e-12, axis=axis)
    _, c1, c2, c3 = best
    return HingeMean(offset=c1, slope=c2, threshold=c3, axis=axis)


def _pack(hyper: GpHyper, hinge: HingeMean | None):
    th = [math.log(max(hyper.signal_var, 1e-8)), math.log(hyper.noise_var)]
    th += list(np.log(hyper.length_scales))
    if hinge is not None:
        th += [hinge.offset, hinge.slope, hinge.threshold]
    return np.array(th)


def _unpack(theta, axis: int, with_hinge: bool, continuous: bool):
    hyper = GpHyper(
        signal_var=math.exp(theta[0]),
        noise_var=math.exp(theta[1]),
        length_scales=np.exp(theta[2:8]),
    )
    hinge = None
    if with_hinge:
        hinge = HingeMean(
            offset=float(theta[8]),
            slope=float(theta[9]),
            threshold=float(theta[10]),
            axis=axis,
            continuous=continuous,
        )
    return hyper, hinge


def fit_axis(
    X,
    y,
    axis: int,
    mean_kind: str = "zero",
    init: GpHyper | None = None,
    init_hinge: HingeMean | None = None,
    n_starts: int = 3,
    reg_weight: float = 2.0,
    continuous_hinge: bool = True,
    rng: np.random.Generator | None = None,
) -> AxisGp:
    """Fit one axis GP by multi-start NLL minimization.

    Kernel hyperparameters are optimized in log space with box bounds and
    an L2 pull toward the initial values (fitting needs strong
    regularization to stay comparable across axes). Hinge constants, when
    a hinge mean is selected, are fitted jointly without regularization.

    Fitting defaults to the continuity-enforcing hinge: the discontinuous
    form cannot represent a continuous contact profile at a nonzero
    threshold, which forces the kernel to absorb the jump.
    """
    if mean_kind not in ("zero", "hinge"):
        raise ValueError("mean_kind must be 'zero' or 'hinge'")
    X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, N_POSE)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(y) < 1:
        raise FitError("need at least one training point per axis")
    rng = rng if rng is not None else np.random.default_rng(0)

    if init is None:
        yvar = float(np.var(y))
        span = np.maximum(np.ptp(X, axis=0), 1e-2)
        init = GpHyper(
            signal_var=max(yvar, 1e-4),
            noise_var=max(0.1 * yvar, 1e-4),
            length_scales=0.3 * span,
        )
    with_hinge = mean_kind == "hinge"
    hinge0 = None
    if with_hinge:
        if init_hinge is not None:
            hinge0 = init_hinge
        else:
            hinge0 = _init_hinge(X, y, axis)
            if not continuous_hinge:
                # _init_hinge parametrizes the line through the kink
                hinge0 = replace(hinge0, offset=hinge0.offset - hinge0.slope * hinge0.threshold)
        hinge0 = replace(hinge0, axis=axis, continuous=continuous_hinge)

    theta0 = _pack(init, hinge0)
    n_kernel = 8

    xs_axis = X[:, axis]
    # length scales shorter than a few percent of the data span only let the
    # kernel interpolate noise and defeat the hinge mean
    span = np.maximum(np.ptp(X, axis=0), 1e-2)
    ls_lo = np.maximum(np.log(0.05 * span), _LOG_LS_BOUNDS[0])
    lo = np.concatenate(
        [
            [_LOG_SV_BOUNDS[0], _LOG_NV_BOUNDS[0]],
            ls_lo,
            [-1e4, -1e8, float(np.min(xs_axis)) - 0.05] if with_hinge else [],
        ]
    )
    hi = np.concatenate(
        [
            [_LOG_SV_BOUNDS[1], _LOG_NV_BOUNDS[1]],
            np.full(N_POSE, _LOG_LS_BOUNDS[1]),
            [1e4, 1e8, float(np.max(xs_axis)) + 0.05] if with_hinge else [],
        ]
    )
    bounds = list(zip(lo, hi))
    theta0 = np.clip(theta0, lo, hi)

    def nll_of(theta):
        hyper, hinge = _unpack(theta, axis, with_hinge, continuous_hinge)
        try:
            gp = AxisGp(X=X, y=y, hyper=hyper, mean_fn=hinge)
        except FitError:
            return 1e12
        val = gp.nll()
        if not np.isfinite(val):
            return 1e12
        reg = reg_weight * float(np.sum((theta[:n_kernel] - theta0[:n_kernel]) ** 2))
        return val + reg

    if not np.isfinite(nll_of(theta0)):
        raise FitError("non-finite NLL at initial hyperparameters; check data scaling")

    best_theta, best_val = theta0, nll_of(theta0)
    for s in range(max(n_starts, 1)):
        t0 = theta0.copy()
        if s > 0:
            t0[:n_kernel] += rng.normal(0.0, 0.5, size=n_kernel)
            t0 = np.clip(t0, lo, hi)
        res = minimize(nll_of, t0, method="L-BFGS-B", bounds=bounds)
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun

    hyper, hinge = _unpack(best_theta, axis, with_hinge, continuous_hinge)
    return AxisGp(X=X, y=y, hyper=hyper, mean_fn=hinge)


def fit_force_model(
    X,
    F,
    mean_kind="zero",
    hinge_axes=None,
    n_starts: int = 3,
    reg_weight: float = 1e-2,
    continuous_hinge: bool = True,
    seed: int = 0,
) -> GpForceModel:
    """Fit all six axes independently on shared pose inputs.

    mean_kind may be a single kind applied to all axes or a per-axis list.
    With ``hinge_axes`` given, only those force axes get a hinge mean (the
    hinge acts on the matching pose coordinate); others use a zero mean.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, N_POSE)
    F = np.atleast_2d(np.asarray(F, dtype=float)).reshape(-1, N_POSE)
    if isinstance(mean_kind, str):
        if hinge_axes is not None:
            kinds = ["hinge" if i in hinge_axes else "zero" for i in range(N_POSE)]
        else:
            kinds = [mean_kind] * N_POSE
    else:
        kinds = list(mean_kind)
    axes = []
    for i in range(N_POSE):
        rng = np.random.default_rng(seed + 1000 * i)
        axes.append(
            fit_axis(
                X,
                F[:, i],
                axis=i,
                mean_kind=kinds[i],
                n_starts=n_starts,
                reg_weight=reg_weight,
                continuous_hinge=continuous_hinge,
                rng=rng,
            )
        )
    return GpForceModel(axes=tuple(axes))


# ---------------------------------------------------------------------------
# Serialization and demonstration-log ingestion
# ---------------------------------------------------------------------------


def model_to_json(model: GpForceModel) -> str:
    doc = {"format": "gpmpc-force-model", "version": 1, "axes": []}
    for gp in model.axes:
        entry = {
            "X": gp.X.tolist(),
            "y": gp.y.tolist(),
            "signal_var": gp.hyper.signal_var,
            "noise_var": gp.hyper.noise_var,
            "length_scales": gp.hyper.length_scales.tolist(),
            "mean": None,
        }
        if gp.mean_fn is not None:
            entry["mean"] = {
                "offset": gp.mean_fn.offset,
                "slope": gp.mean_fn.slope,
                "threshold": gp.mean_fn.threshold,
                "axis": gp.mean_fn.axis,
                "continuous": gp.mean_fn.continuous,
            }
        doc["axes"].append(entry)
    return json.dumps(doc, indent=1, sort_keys=True)


def model_from_json(text: str) -> GpForceModel:
    doc = json.loads(text)
    if doc.get("format") != "gpmpc-force-model":
        raise ValueError("not a gpmpc force-model document")
    axes = []
    for entry in doc["axes"]:
        hinge = None
        if entry["mean"] is not None:
            hinge = HingeMean(
                offset=entry["mean"]["offset"],
                slope=entry["mean"]["slope"],
                threshold=entry["mean"]["threshold"],
                axis=entry["mean"]["axis"],
                continuous=entry["mean"].get("continuous", False),
            )
        hyper = GpHyper(
            signal_var=entry["signal_var"],
            noise_var=entry["noise_var"],
            length_scales=np.array(entry["length_scales"]),
        )
        axes.append(AxisGp(X=np.array(entry["X"]).reshape(-1, N_POSE),
                           y=np.array(entry["y"]), hyper=hyper, mean_fn=hinge))
    return GpForceModel(axes=tuple(axes))


def save_model(model: GpForceModel, path):
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> GpForceModel:
    with open(path) as fh:
        return model_from_json(fh.read())


DEMO_COLUMNS = ["t"] + [f"x{i}" for i in range(6)] + [f"f{i}" for i in range(6)]


def read_demo_csv(path):
    """Read a demonstration log: columns t, x0..x5, f0..f5.

    Returns (t, X, F) with X, F of shape (T, 6).
    """
    with open(path) as fh:
        header = fh.readline().strip()
        body = fh.read()
    cols = [c.strip() for c in header.split(",")]
    if cols != DEMO_COLUMNS:
        raise ValueError(f"{path}: expected columns {DEMO_COLUMNS}, got {cols}")
    if not body.strip():
        raise ValueError(f"{path}: empty or malformed demonstration log")
    data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    if data.size == 0 or data.shape[1] != 13:
        raise ValueError(f"{path}: empty or malformed demonstration log")
    return data[:, 0], data[:, 1:7], data[:, 7:13]


def subsample(X, F, max_points: int = 80):
    """Uniform-stride subsampling to keep fits tractable."""
    n = len(X)
    if n <= max_points:
        return X, F
    idx = np.linspace(0, n - 1, max_points).round().astype(int)
    return X[idx], F[idx]
