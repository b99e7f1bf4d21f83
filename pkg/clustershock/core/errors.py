class ClusterShockError(Exception):
    """Base class for every error raised by the engine."""


class SchemaError(ClusterShockError, ValueError):
    def __init__(self, message: str, stratum: int | None = None, path: str | None = None):
        self.message = message
        self.stratum = stratum
        self.path = path
        prefix = ""
        if path:
            prefix += f"{path}: "
        if stratum is not None:
            prefix += f"stratum {stratum}: "
        super().__init__(f"{prefix}{message}")


class ShapeMismatch(ClusterShockError, ValueError):
    pass


class CapExceeded(ClusterShockError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"enumeration needs {count} assignments, cap is {cap}")


class DegenerateArm(ClusterShockError):
    def __init__(self, stratum: int | str, detail: str = "an arm has fewer than 2 units"):
        self.stratum = stratum
        super().__init__(f"stratum {stratum}: {detail}, robust variance undefined")


class MissingShocks(ClusterShockError, ValueError):
    pass


class UnsupportedMode(ClusterShockError):
    pass


class UnequalStrataSizes(ClusterShockError, ValueError):
    pass


class TooManyClusters(ClusterShockError):
    def __init__(self, n_clusters: int, cap: int):
        self.n_clusters = n_clusters
        self.cap = cap
        super().__init__(
            f"full enumeration over {n_clusters} clusters needs 2^{n_clusters} sign vectors, cap is {cap}"
        )


class PrerequisiteViolation(ClusterShockError):
    def __init__(self, target: str, reason: str):
        self.target = target
        super().__init__(f"target '{target}': {reason}")


class ParseError(ClusterShockError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ValidationError(ClusterShockError, ValueError):
    pass
