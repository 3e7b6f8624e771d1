# --- chunker.py ---
from dataclasses import dataclass
from typing import Any, Dict, List
import logging

import numpy as np

from .errors import InvalidParameterError

logger = logging.getLogger(__name__)


@dataclass
class GridChunk:
    """Contiguous slice of a sweep grid; start/stop index the full grid."""
    values: np.ndarray
    start: int
    stop: int
    chunk_index: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "values": self.values.tolist(),
            "start": self.start,
            "stop": self.stop,
            "chunk_index": self.chunk_index,
        }


class GridChunker:
    """Split a sweep grid into contiguous chunks for concurrent evaluation."""

    def __init__(self, max_points: int = 256):
        if max_points < 2:
            raise InvalidParameterError(f"max_points must be at least 2, got {max_points}")
        self.max_points = max_points

    def chunk(self, grid) -> List[GridChunk]:
        """
        Consecutive chunks of at most max_points values.
        Every chunk after the first repeats the last value of its predecessor
        so that branches can be aligned across the seam.
        """
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        if grid.size == 0:
            return []

        chunks = []
        start = 0
        while True:
            stop = min(start + self.max_points, grid.size)
            chunks.append(GridChunk(values=grid[start:stop], start=start, stop=stop, chunk_index=len(chunks)))
            if stop >= grid.size:
                break
            start = stop - 1

        logger.info(f"Chunked grid of {grid.size} points into {len(chunks)} segments (max {self.max_points} each)")
        return chunks
