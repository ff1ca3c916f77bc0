"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

HERMITIAN_ATOL = 1e-10
TRACE_ATOL = 1e-10
PSD_ATOL = 1e-10


def check_square(mat, name="matrix"):
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square 2-D array, got shape {mat.shape}")
    return mat


def check_same_dim(a, b):
    a = check_square(a, "first argument")
    b = check_square(b, "second argument")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def density_matrix_violations(rho, atol=HERMITIAN_ATOL):
    """Return a list of human-readable invariant violations (empty if valid)."""
    rho = np.asarray(rho)
    problems = []
    if not np.all(np.isfinite(rho)):
        return ["non-finite entries"]
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm >= atol:
        problems.append(f"not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(rho)
    if abs(tr - 1.0) >= max(atol, TRACE_ATOL):
        problems.append(f"trace {tr:.12g} != 1")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < -max(atol, PSD_ATOL):
        problems.append(f"not PSD (min eigenvalue {w.min():.3g})")
    return problems


def check_density_matrix(rho, atol=HERMITIAN_ATOL):
    """Validate a density matrix and return it as a complex array."""
    rho = check_square(rho, "density matrix")
    problems = density_matrix_violations(rho, atol)
    if problems:
        raise ValueError("invalid density matrix: " + "; ".join(problems))
    return np.asarray(rho, dtype=complex)


def check_quadrature_array(X, sample_weight=None):
    """Validate an ``(n, 2)`` array of ``(theta, u)`` rows and optional weights."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError(f"expected X of shape (n_samples, 2) with columns (theta, u), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("X has no rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if sample_weight is None:
        w = np.ones(X.shape[0])
    else:
        w = np.asarray(sample_weight, dtype=float)
        if w.shape != (X.shape[0],):
            raise ValueError("sample_weight must have one entry per row of X")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("sample_weight must be finite and non-negative")
        if w.sum() <= 0:
            raise ValueError("sample_weight sums to zero")
    return X, w


def check_time_series(t, y, y_err=None, min_points=1):
    t = np.asarray(t, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if t.shape != y.shape:
        raise ValueError(f"t and y lengths differ ({t.size} vs {y.size})")
    if t.size < min_points:
        raise ValueError(f"need at least {min_points} points, got {t.size}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError("time series contains non-finite values")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("t must be strictly increasing")
    if y_err is not None:
        y_err = np.asarray(y_err, dtype=float).ravel()
        if y_err.shape != y.shape or np.any(y_err <= 0):
            raise ValueError("y_err must be positive with the same length as y")
    return t, y, y_err
