from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError, ShapeError

TRUTH_FIELDS = ("mu_true", "tau_true", "pi_true")


@dataclass
class Dataset:
    """Observational sample (X, A, Y) with optional simulation ground truth.

    X is N x P, A is a 0/1 treatment vector and Y the outcome. ``mu_true``,
    ``tau_true`` and ``pi_true`` are filled in only for simulated data.
    """

    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    mu_true: Optional[np.ndarray] = None
    tau_true: Optional[np.ndarray] = None
    pi_true: Optional[np.ndarray] = None
    feature_names: Optional[list] = None
    binary_columns: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.Y = np.asarray(self.Y, dtype=np.float64).reshape(-1)
        A = np.asarray(self.A, dtype=np.float64).reshape(-1)
        if self.X.ndim != 2:
            raise ShapeError("X must be a 2-d matrix")
        n = self.X.shape[0]
        if A.shape[0] != n or self.Y.shape[0] != n:
            raise ShapeError(f"inconsistent lengths: X {n}, A {A.shape[0]}, Y {self.Y.shape[0]}")
        if not np.all((A == 0) | (A == 1)):
            raise InputError("treatment entries must be 0 or 1")
        self.A = A.astype(np.int64)
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise InputError("X and Y must be finite")
        for name in TRUTH_FIELDS:
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64).reshape(-1)
                if v.shape[0] != n:
                    raise ShapeError(f"{name} has length {v.shape[0]}, expected {n}")
                setattr(self, name, v)
        if self.feature_names is None:
            self.feature_names = [f"x{j + 1}" for j in range(self.P)]
        elif len(self.feature_names) != self.P:
            raise ShapeError("feature_names length must equal the number of columns")
        if self.binary_columns is None:
            self.binary_columns = np.all((self.X == 0) | (self.X == 1), axis=0)
        else:
            self.binary_columns = np.asarray(self.binary_columns, dtype=bool)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def P(self) -> int:
        return self.X.shape[1]

    @property
    def has_truth(self) -> bool:
        return self.tau_true is not None

    def arm_counts(self):
        n1 = int(self.A.sum())
        return self.N - n1, n1

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        kw = {name: None if getattr(self, name) is None else getattr(self, name)[idx]
              for name in TRUTH_FIELDS}
        return Dataset(self.X[idx], self.A[idx], self.Y[idx], feature_names=list(self.feature_names),
                       binary_columns=self.binary_columns.copy(), **kw)
