from typing import List, Sequence

import attr
import numpy as np
from toolz import partition_all, sliding_window


def smooth(history: Sequence[float], window: int = 5) -> List[float]:
    '''means over consecutive non-overlapping windows of a history

    :param history: sequence of per-epoch values

    :param window: positive int; the last window may be short

    :rtype: list of float

    '''

    return [float(np.mean(w)) for w in partition_all(window, history)]


def is_monotone(values: Sequence[float], increasing: bool = True,
                tolerance: float = 0.) -> bool:
    '''whether values never move against the direction by more than tolerance'''

    sign = 1 if increasing else -1
    return all(sign * (b - a) >= -tolerance
               for a, b in sliding_window(2, values))


@attr.s(auto_attribs=True, frozen=True)
class TrendCheck:
    '''outcome of checking a swept metric for a non-decreasing trend

    :param passed: bool

    :param inversions: list of (position, drop) for adjacent pairs that
    decrease

    '''

    passed: bool
    inversions: tuple


def trend_check(values: Sequence[float], allowed_inversions: int = 1,
                tolerance: float = 0.02) -> TrendCheck:
    '''non-decreasing, but for a few small adjacent drops

    Values are skipped if None (undefined metrics).

    '''

    values = [v for v in values if v is not None]
    inversions = tuple((i, a - b) for i, (a, b)
                       in enumerate(sliding_window(2, values)) if b < a)
    passed = (len(inversions) <= allowed_inversions
              and all(drop <= tolerance for _, drop in inversions))
    return TrendCheck(passed, inversions)
