"""Five qualitative indicators of human-like merging behavior.

I1  merge-first probability rises with headway advantage
I2  merge-first probability falls with relative-velocity advantage
I3  gap at merge grows with |headway|
I4  gap at merge is unaffected by |relative velocity|
I5  control is intermittent (piecewise-linear velocity)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..domain import RegressionFit
from ..metrics import PIECEWISE_THRESHOLD


@dataclass(frozen=True)
class IndicatorScore:
    i1: bool
    i2: bool
    i3: bool
    i4: bool
    i5: bool

    @property
    def flags(self) -> tuple[bool, ...]:
        return (self.i1, self.i2, self.i3, self.i4, self.i5)

    @property
    def total(self) -> int:
        return sum(self.flags)


def score_indicators(logit: Optional[RegressionFit], gap: Optional[RegressionFit],
                     mean_piecewise: Optional[float], alpha: float = 0.05,
                     piecewise_threshold: float = PIECEWISE_THRESHOLD) -> IndicatorScore:
    """A missing fit (e.g. separation) fails the indicators that depend on it."""
    i1 = i2 = i3 = i4 = False
    if logit is not None:
        i1 = logit.coef("h") > 0 and logit.p("h") < alpha
        i2 = logit.coef("dv") < 0 and logit.p("dv") < alpha
    if gap is not None:
        i3 = gap.coef("abs_h") > 0 and gap.p("abs_h") < alpha
        i4 = gap.p("abs_dv") >= alpha
    i5 = mean_piecewise is not None and mean_piecewise >= piecewise_threshold
    return IndicatorScore(i1, i2, i3, i4, i5)
