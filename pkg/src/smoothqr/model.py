"""Dataset container, covariate standardization, and CSV loading.

A Dataset always carries an explicit intercept: column 0 of the design matrix
is identically one.  Raw covariate matrices enter through
``Dataset.from_covariates`` or ``load_csv``, which prepend the intercept.
"""

import csv

import numpy as np

from .errors import CsvParseError, DegenerateDesignError, DimensionMismatchError


class Dataset:
    """Immutable response vector plus design matrix with intercept column.

    Attributes
    ----------
    y : ndarray, shape (n,)
        Response vector.
    X : ndarray, shape (n, p)
        Design matrix whose first column is identically 1.
    n, p : int
        Sample count and parameter dimension (n >= p >= 1).
    names : list of str
        Column names; names[0] is "intercept".
    """

    def __init__(self, y, X, names=None):
        y = np.ascontiguousarray(y, dtype=float)
        X = np.ascontiguousarray(X, dtype=float)
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DimensionMismatchError(
                f"incompatible shapes: y {y.shape}, X {X.shape}"
            )
        n, p = X.shape
        if not n >= p >= 1:
            raise DegenerateDesignError(f"need n >= p >= 1, got n={n}, p={p}")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise ValueError("dataset contains non-finite entries")
        if not np.all(X[:, 0] == 1.0):
            raise ValueError("column 0 of the design matrix must be identically 1")
        if names is None:
            names = ["intercept"] + [f"x{j}" for j in range(1, p)]
        elif len(names) != p:
            raise DimensionMismatchError(f"expected {p} column names, got {len(names)}")
        y.flags.writeable = False
        X.flags.writeable = False
        self.y = y
        self.X = X
        self.n = n
        self.p = p
        self.names = list(names)

    @classmethod
    def from_covariates(cls, y, Z, names=None):
        """Build a Dataset from raw covariates, prepending the intercept column."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        n = Z.shape[0]
        X = np.c_[np.ones(n), Z]
        if names is not None:
            names = ["intercept"] + list(names)
        return cls(np.asarray(y, dtype=float), X, names=names)

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p})"


class StandardizeTransform:
    """Per-column location/scale used to standardize non-intercept covariates.

    scales use the population standard deviation (denominator n); either
    convention round-trips exactly through the coefficient back-transform.
    """

    def __init__(self, means, scales):
        means = np.asarray(means, dtype=float)
        scales = np.asarray(scales, dtype=float)
        if means.shape != scales.shape:
            raise DimensionMismatchError("means and scales must have equal length")
        if np.any(scales <= 0):
            raise DegenerateDesignError("scales must be strictly positive")
        self.means = means
        self.scales = scales

    def standardize_coefficients(self, beta):
        """Map original-scale coefficients to the standardized design's scale."""
        beta = np.asarray(beta, dtype=float)
        out = beta.copy()
        out[1:] = beta[1:] * self.scales
        out[0] = beta[0] + self.means @ beta[1:]
        return out


def standardize(data):
    """Scale non-intercept columns to mean zero and unit variance.

    Returns the standardized Dataset and the transform needed to map
    coefficients back to the original scale.  Raises DegenerateDesignError,
    naming the column, if any non-intercept column is constant.
    """
    Z = data.X[:, 1:]
    means = Z.mean(axis=0)
    scales = Z.std(axis=0)
    bad = np.flatnonzero(scales <= 0)
    if bad.size:
        raise DegenerateDesignError(
            f"design column {bad[0] + 1} ({data.names[bad[0] + 1]!r}) has zero variance"
        )
    X_std = np.c_[np.ones(data.n), (Z - means) / scales]
    return Dataset(data.y, X_std, names=data.names), StandardizeTransform(means, scales)


def destandardize_coefficients(beta_std, transform):
    """Map standardized-design coefficients back to the original scale.

    slope_j = slope_std_j / scale_j; the intercept absorbs the means so that
    fitted values are identical on the original data.
    """
    beta_std = np.asarray(beta_std, dtype=float)
    if beta_std.shape[0] != transform.means.shape[0] + 1:
        raise DimensionMismatchError(
            f"coefficient vector of length {beta_std.shape[0]} does not match "
            f"transform with {transform.means.shape[0]} covariates"
        )
    out = beta_std.copy()
    out[1:] = beta_std[1:] / transform.scales
    out[0] = beta_std[0] - out[1:] @ transform.means
    return out


def residuals(data, beta):
    """r_i = y_i - <x_i, beta>."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.p,):
        raise DimensionMismatchError(
            f"beta has shape {beta.shape}, expected ({data.p},)"
        )
    return data.y - data.X @ beta


def load_csv(path, y_col):
    """Load a headed CSV into a Dataset.

    The column named ``y_col`` becomes the response; every other column is a
    covariate in file order; the intercept column is prepended.  Non-numeric
    cells raise CsvParseError with the offending row/column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file") from None
        header = [name.strip() for name in header]
        if y_col not in header:
            raise CsvParseError(f"{path}: no column named {y_col!r} in header {header}")
        y_idx = header.index(y_col)
        cov_names = [name for j, name in enumerate(header) if j != y_idx]
        y_vals, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvParseError(
                    f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}"
                )
            parsed = []
            for j, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise CsvParseError(
                        f"{path}: non-numeric value {cell.strip()!r} at row {line_no}, "
                        f"column {header[j]!r}"
                    ) from None
            y_vals.append(parsed[y_idx])
            rows.append([v for j, v in enumerate(parsed) if j != y_idx])
    if not rows:
        raise CsvParseError(f"{path}: no data rows")
    return Dataset.from_covariates(np.array(y_vals), np.array(rows), names=cov_names)
