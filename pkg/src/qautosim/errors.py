"""Exception hierarchy shared by every simulation module."""


class SimulationError(Exception):
    """Base class for runtime failures inside a simulation (exit code 3)."""


class GimbalLock(SimulationError):
    pass


class NonPositiveMass(SimulationError):
    pass


class SingularInertia(SimulationError):
    pass


class NonFinite(SimulationError):
    pass


class EmptyChain(SimulationError):
    pass


class SizeMismatch(SimulationError):
    pass


class ZeroVector(SimulationError):
    pass


class NonUnitAxis(SimulationError):
    pass


class NonHermitian(SimulationError):
    pass


class DegenerateSpectrum(SimulationError):
    pass


class MisalignedStreams(SimulationError):
    pass


class EmptyKey(SimulationError):
    pass


class KeyExhausted(SimulationError):
    pass


class KeyReuse(SimulationError):
    pass


class UnsortedStream(SimulationError):
    pass


class NoCounts(SimulationError):
    pass


class ZeroDenominator(SimulationError):
    pass


class DegenerateLoop(SimulationError):
    pass


class ImproperTF(SimulationError):
    pass


class UnstableLoop(SimulationError):
    pass


class CoefficientOverflow(SimulationError):
    pass


class ConfigError(Exception):
    """Scenario file could not be turned into a valid configuration (exit code 2)."""


class ParseError(ConfigError):
    pass


class SchemaError(ConfigError):
    def __init__(self, message, path=()):
        self.path = tuple(path)
        where = "/".join(str(p) for p in self.path) or "<root>"
        super().__init__(f"{where}: {message}")
