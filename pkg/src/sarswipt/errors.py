"""Exception types shared across the solvers."""


class SarSwiptError(Exception):
    pass


class SaturationExceeded(ValueError):
    """The requested harvested power lies at or above the rectifier ceiling."""

    def __init__(self, target, ceiling):
        super().__init__(f"EH target {target!r} W is not below the saturation limit {ceiling!r} W")
        self.target = target
        self.ceiling = ceiling


class ProblemInfeasible(SarSwiptError):
    pass


class SarInfeasible(ProblemInfeasible):
    """No beam direction meets the SAR limit at the required received power."""


class DegenerateChannel(SarSwiptError):
    pass


class RankRecoveryFailed(SarSwiptError):
    def __init__(self, ratios, threshold):
        super().__init__(f"rank ratios {list(ratios)} exceed {threshold:g}")
        self.ratios = list(ratios)
        self.threshold = threshold


class RandomizationFailed(SarSwiptError):
    def __init__(self, best_gap, draws):
        super().__init__(f"no feasible candidate in {draws} draws (best gap {best_gap:.3e})")
        self.best_gap = best_gap
        self.draws = draws


class ConfigError(SarSwiptError):
    """Bad configuration file; ``line`` is 1-based when it could be located."""

    def __init__(self, message, path=None, line=None):
        where = str(path) if path is not None else "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
