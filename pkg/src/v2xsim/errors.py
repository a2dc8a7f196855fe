"""Exception hierarchy shared across the simulator.

The CLI maps these onto exit codes: ConfigError -> 2, MapDataError and
TraceDataError -> 3, CacheIntegrityError / StaleCacheError /
CacheVersionError -> 4.
"""


class V2xSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(V2xSimError):
    """Invalid or inconsistent scenario configuration."""


class GeometryError(V2xSimError):
    """Degenerate or out-of-domain geometric input."""


class MapDataError(V2xSimError):
    """Malformed or unusable map document."""


class TraceDataError(V2xSimError):
    """Malformed or unusable mobility trace."""


class RadioModelError(V2xSimError):
    """Out-of-domain input to a propagation or link-budget model."""


class CacheError(V2xSimError):
    """Base class for link-cache problems."""


class CacheIntegrityError(CacheError):
    """Cache file is truncated or fails its checksum."""


class CacheVersionError(CacheError):
    """Cache file was written by an incompatible format version."""


class StaleCacheError(CacheError):
    """Cache digests do not match the current inputs."""

    def __init__(self, field: str, expected: str, found: str):
        self.field = field
        self.expected = expected
        self.found = found
        super().__init__(
            f"cache is stale: {field} mismatch (expected {expected[:12]}…, "
            f"found {found[:12]}…)"
        )


class UnknownEntityError(V2xSimError):
    """Reference to a base station, tile, or site that does not exist."""


class SimulationError(V2xSimError):
    """Invalid simulation state transition (e.g. stepping past the horizon)."""
