# --- merger.py ---
from typing import List
import logging

import numpy as np

from .eigensystem import EP_TOLERANCE, branch_continuity_violations
from .errors import InvalidParameterError
from .models import EigenSweep

logger = logging.getLogger(__name__)


class SweepMerger:
    """Merge chunked eigenvalue sweeps back into one surface in grid order."""

    @staticmethod
    def merge(sweeps: List[EigenSweep]) -> EigenSweep:
        """
        Concatenate along omega3. Chunks share one seam column; the duplicate
        is dropped after each row's branches are aligned with the previous chunk.
        """
        if not sweeps:
            raise InvalidParameterError("Nothing to merge")
        delta3 = sweeps[0].delta3
        omega3 = [sweeps[0].omega3]
        plus = [sweeps[0].delta_plus]
        minus = [sweeps[0].delta_minus]

        for sweep in sweeps[1:]:
            if sweep.delta3.shape != delta3.shape or not np.array_equal(sweep.delta3, delta3):
                raise InvalidParameterError("Chunks disagree on the delta3 grid")
            last_p, last_m = plus[-1][:, -1], minus[-1][:, -1]
            first_p, first_m = sweep.delta_plus[:, 0], sweep.delta_minus[:, 0]
            keep = np.abs(first_p - last_p) + np.abs(first_m - last_m)
            cross = np.abs(first_m - last_p) + np.abs(first_p - last_m)
            swap = (cross < keep)[:, None]
            cur_p = np.where(swap, sweep.delta_minus, sweep.delta_plus)
            cur_m = np.where(swap, sweep.delta_plus, sweep.delta_minus)

            seam = 1 if np.isclose(sweep.omega3[0], omega3[-1][-1], rtol=0, atol=1e-15) else 0
            omega3.append(sweep.omega3[seam:])
            plus.append(cur_p[:, seam:])
            minus.append(cur_m[:, seam:])

        merged = EigenSweep(
            omega3=np.concatenate(omega3),
            delta3=delta3,
            delta_plus=np.concatenate(plus, axis=1),
            delta_minus=np.concatenate(minus, axis=1),
            omega3_ep=sweeps[0].omega3_ep,
        )
        logger.info(f"Merged {len(sweeps)} chunks into {merged.omega3.size} x {delta3.size} grid")
        return merged

    @staticmethod
    def validate_continuity(sweep: EigenSweep, ep_tolerance: float = EP_TOLERANCE) -> bool:
        """No branch jumps further than the gap between the branches, away from the EP."""
        violations = branch_continuity_violations(sweep, ep_tolerance)
        if violations:
            row, col = violations[0]
            logger.warning(
                f"Branch continuity violated at {len(violations)} steps, first at "
                f"delta3={sweep.delta3[row]:.6g}, omega3={sweep.omega3[col]:.6g}"
            )
            return False
        return True
