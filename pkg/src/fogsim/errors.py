class FogSimError(Exception):
    """Base class for every error raised by the simulator."""


class TopologyError(FogSimError):
    pass


class ApplicationError(FogSimError):
    pass


class UnroutableMessage(ApplicationError):
    """A module received a message it has no transmission rule for."""


class ScenarioError(FogSimError):
    """A scenario document failed schema or cross-reference validation.

    ``location`` is a JSON-pointer-style path to the offending element.
    """

    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class SimulationError(FogSimError):
    pass
