"""
Exception hierarchy for steamgp.

Every error carries its structured fields and renders itself as the
machine-readable `{"error": ...}` document the tools print on stderr.
"""

from typing import Any, Dict, Optional


class SteamError(Exception):
    """Base class for all steamgp errors."""

    def fields(self) -> Dict[str, Any]:
        return {}

    def to_dict(self) -> Dict[str, Any]:
        data = {"error": type(self).__name__, "message": str(self)}
        data.update(self.fields())
        return data


class ConfigError(SteamError, ValueError):
    """Invalid configuration value or document."""


class DimensionMismatch(SteamError, ValueError):
    """Vector or block sizes do not agree."""


class NotPositiveDefinite(SteamError):
    """A pivot block failed Cholesky (or fell below the pivot tolerance)."""

    def __init__(self, block: int, stage: str = "trajectory", detail: str = ""):
        self.block = block
        self.stage = stage
        msg = f"matrix not positive definite at {stage} block {block}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)

    def fields(self) -> Dict[str, Any]:
        return {"block": self.block, "stage": self.stage}


class NegativeInterval(SteamError, ValueError):
    """Transition requested backwards in time."""

    def __init__(self, t: float, s: float):
        self.t = t
        self.s = s
        super().__init__(f"t={t!r} precedes s={s!r}")

    def fields(self) -> Dict[str, Any]:
        return {"t": self.t, "s": self.s}


class DegenerateInterval(SteamError, ValueError):
    """Interval too short for a well-conditioned noise block."""

    def __init__(self, dt: float):
        self.dt = dt
        super().__init__(f"interval of {dt!r} s is below the minimum")

    def fields(self) -> Dict[str, Any]:
        return {"dt": self.dt}


class NonMonotonicTimes(SteamError, ValueError):
    """Knot times are not strictly increasing."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"times not strictly increasing at index {index}")

    def fields(self) -> Dict[str, Any]:
        return {"index": self.index}


class BeforeStart(SteamError, ValueError):
    """Query time precedes the first knot."""

    def __init__(self, tau: float, t0: float):
        self.tau = tau
        self.t0 = t0
        super().__init__(f"query time {tau!r} is before the first knot {t0!r}")

    def fields(self) -> Dict[str, Any]:
        return {"tau": self.tau, "t0": self.t0}


class OutsideKeytimeRange(SteamError, ValueError):
    """Measurement time not bracketed by keytimes."""

    def __init__(self, t: float, first: float, last: float):
        self.t = t
        self.first = first
        self.last = last
        super().__init__(f"measurement time {t!r} outside keytimes [{first!r}, {last!r}]")

    def fields(self) -> Dict[str, Any]:
        return {"t": self.t, "first": self.first, "last": self.last}


class CoincidentLandmark(SteamError, ValueError):
    """Landmark sits on the robot; bearing undefined."""

    def __init__(self, range_m: float, landmark: Optional[int] = None):
        self.range_m = range_m
        self.landmark = landmark
        where = f" (landmark {landmark})" if landmark is not None else ""
        super().__init__(f"landmark coincident with robot{where}: range {range_m!r} m")

    def fields(self) -> Dict[str, Any]:
        return {"range": self.range_m, "landmark": self.landmark}


class NotConverged(SteamError):
    """Iteration limit reached; carries the last (or best) iterate."""

    def __init__(self, result: Any, iterations: int):
        self.result = result
        self.iterations = iterations
        super().__init__(f"not converged after {iterations} iterations")

    def fields(self) -> Dict[str, Any]:
        return {"iterations": self.iterations}


class ParseError(SteamError, ValueError):
    """Malformed dataset or report file."""

    def __init__(self, path: str, line: int, reason: str):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")

    def fields(self) -> Dict[str, Any]:
        return {"path": self.path, "line": self.line, "reason": self.reason}


class SortOrderError(ParseError):
    """Records out of time order."""


class VersionMismatch(SteamError):
    """File format version is not the one this build reads."""

    def __init__(self, path: str, found: Any, expected: Any):
        self.path = str(path)
        self.found = found
        self.expected = expected
        super().__init__(f"{self.path}: version {found!r}, expected {expected!r}")

    def fields(self) -> Dict[str, Any]:
        return {"path": self.path, "found": self.found, "expected": self.expected}
