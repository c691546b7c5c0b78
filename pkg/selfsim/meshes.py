import math
from dataclasses import dataclass, field
import numpy as np
from .errors import DomainError

# Slack for the floor() in the point count; log10 of exact decades may land a hair below the integer.
COUNT_SLACK = 1e-9
STEP_TOLERANCE = 1e-9
LINEAR_DECIMALS = 12


@dataclass(frozen=True)
class LogMesh:
    lo: float
    hi: float
    points_per_decade: int
    values: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def descriptor(self):
        return f'{self.lo!r}:{self.hi!r}:{self.points_per_decade}'

    def to_dict(self):
        return dict(lo=self.lo, hi=self.hi, points_per_decade=self.points_per_decade)

    @classmethod
    def from_descriptor(cls, text):
        try:
            lo, hi, ppd = text.split(':')
            lo, hi, ppd = float(lo), float(hi), int(ppd)
        except ValueError:
            raise DomainError(f'malformed log mesh descriptor "{text}"')
        return log_mesh(lo, hi, ppd)


@dataclass(frozen=True)
class LinearMesh:
    lo: float
    hi: float
    step: float
    values: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def to_dict(self):
        return dict(lo=self.lo, hi=self.hi, step=self.step)


def log_mesh(lo, hi, points_per_decade):
    # lo * 10**(i / ppd), never accumulated: decade points land on exact powers of ten.
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and lo > 0):
        raise DomainError(f'log mesh needs a positive lower bound, got {lo!r}')
    if not (math.isfinite(hi) and hi > lo):
        raise DomainError(f'log mesh needs hi > lo, got lo={lo!r} hi={hi!r}')
    if int(points_per_decade) != points_per_decade or points_per_decade <= 0:
        raise DomainError(f'points per decade must be a positive integer, got {points_per_decade!r}')
    ppd = int(points_per_decade)
    decades = math.log10(hi) - math.log10(lo)
    count = math.floor(ppd * decades + COUNT_SLACK) + 1
    exponents = np.arange(count) / ppd
    values = lo * np.power(10.0, exponents)
    values.flags.writeable = False
    return LogMesh(lo, hi, ppd, values)


def linear_mesh(lo, hi, step):
    lo, hi, step = float(lo), float(hi), float(step)
    if not (math.isfinite(step) and step > 0):
        raise DomainError(f'linear mesh needs a positive step, got {step!r}')
    if not hi > lo:
        raise DomainError(f'linear mesh needs hi > lo, got lo={lo!r} hi={hi!r}')
    intervals = (hi - lo) / step
    rounded = round(intervals)
    if abs(intervals - rounded) > STEP_TOLERANCE * max(1.0, rounded):
        raise DomainError(f'step {step!r} does not divide the range [{lo!r}, {hi!r}]')
    values = np.round(lo + step * np.arange(rounded + 1), LINEAR_DECIMALS)
    values[-1] = hi
    values.flags.writeable = False
    return LinearMesh(lo, hi, step, values)
