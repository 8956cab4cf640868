class DiagramError(ValueError):
    """Invalid diagram construction or operation."""


class OrderingError(DiagramError):
    def __init__(self, message: str, level: int = -1):
        super().__init__(message)
        self.level = level


class StoreMismatchError(DiagramError):
    pass
