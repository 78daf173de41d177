"""Exception types raised by the sampler stack."""


class RSDMCError(Exception):
    """Base class for library errors."""


class ConfigError(RSDMCError, ValueError):
    """Malformed or unknown experiment configuration."""


class ScheduleViolation(RSDMCError, ValueError):
    """A time gap or step size breaks the strong log-concavity regime."""


class DegenerateBandwidth(RSDMCError, ValueError):
    """Kernel bandwidth collapsed to zero (all points identical)."""


class NumericalDivergence(RSDMCError, FloatingPointError):
    """A particle left the finite range during an update.

    ``k``/``r`` locate the outer (segment, iteration) pair, ``i``/``j`` the
    inner chain and inner step (-1 for outer updates), ``particle`` the row.
    """

    def __init__(self, k, r, i, j, particle=None, value=None):
        self.k, self.r, self.i, self.j = k, r, i, j
        self.particle = particle
        self.value = value
        super().__init__(
            f"non-finite or exploding particle at k={k}, r={r}, i={i}, j={j}"
            + (f", particle={particle}" if particle is not None else "")
        )
