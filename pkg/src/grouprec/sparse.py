"""COO-style sparse matrix with validation, convertible to scipy CSR."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class SparseMatrix:
    """Deduplicated (row, col, weight) triples with fixed dimensions."""

    def __init__(self, n_rows: int, n_cols: int,
                 entries: list[tuple[int, int, float]] | None = None):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self._entries: dict[tuple[int, int], float] = {}
        if entries:
            for r, c, w in entries:
                self.set(r, c, w)

    def set(self, row: int, col: int, weight: float = 1.0) -> None:
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise IndexError(f"entry ({row}, {col}) out of range "
                             f"for {self.n_rows}x{self.n_cols} matrix")
        if not np.isfinite(weight):
            raise ValueError(f"non-finite weight at ({row}, {col})")
        self._entries[(row, col)] = float(weight)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def entries(self) -> list[tuple[int, int, float]]:
        return sorted((r, c, w) for (r, c), w in self._entries.items())

    def row_indices(self, row: int) -> list[int]:
        return sorted(c for (r, c) in self._entries if r == row)

    def tocsr(self) -> sp.csr_matrix:
        if not self._entries:
            return sp.csr_matrix((self.n_rows, self.n_cols), dtype=np.float64)
        rows, cols, ws = zip(*[(r, c, w) for (r, c), w in self._entries.items()])
        m = sp.coo_matrix((ws, (rows, cols)), shape=self.shape, dtype=np.float64)
        return m.tocsr()

    def todense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for (r, c), w in self._entries.items():
            out[r, c] = w
        return out

    @classmethod
    def from_edges(cls, n_rows: int, n_cols: int,
                   edges: list[tuple[int, int]], weight: float = 1.0) -> "SparseMatrix":
        m = cls(n_rows, n_cols)
        for r, c in edges:
            m.set(r, c, weight)
        return m
