"""
Solution levels carried through the time loop
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from emacflow.models.space import TaylorHoodSpace
from emacflow.utils.exceptions import EvaluationException, UsageException


@dataclass(frozen=True, eq=False)
class State:
    """Velocity u and EMAC pressure P = p - |u|^2/2 at time t"""
    u: np.ndarray
    P: np.ndarray
    t: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.P))):
            raise EvaluationException(f"State at t={self.t:.6g} has non-finite entries")

    def check(self, space: TaylorHoodSpace) -> "State":
        if self.u.shape != (space.n_velocity,) or self.P.shape != (space.n_pressure,):
            raise UsageException(
                f"State sizes ({self.u.size}, {self.P.size}) do not match space "
                f"({space.n_velocity}, {space.n_pressure})"
            )
        return self


@dataclass(frozen=True, eq=False)
class History:
    """
    The two retained velocity levels u^n (``u_prev``) and u^{n-1} (``u_prev2``)
    at time t = t^n, plus the step index and the last pressure for warm starts.
    """
    u_prev: np.ndarray
    u_prev2: np.ndarray
    t: float
    step: int = 0
    pressure: Optional[np.ndarray] = None

    @classmethod
    def start(cls, u0: np.ndarray, t0: float = 0.0) -> "History":
        """Startup levels u^0 = u^{-1}"""
        u0 = np.array(u0, dtype=float)
        return cls(u_prev=u0, u_prev2=u0.copy(), t=t0, step=0)

    def shift(self, u_next: np.ndarray, t_next: float, pressure: np.ndarray) -> "History":
        return History(
            u_prev=u_next,
            u_prev2=self.u_prev,
            t=t_next,
            step=self.step + 1,
            pressure=pressure,
        )

    def check(self, space: TaylorHoodSpace) -> "History":
        n = space.n_velocity
        if self.u_prev.shape != (n,) or self.u_prev2.shape != (n,):
            raise UsageException(f"History levels do not match velocity size {n}")
        return self
