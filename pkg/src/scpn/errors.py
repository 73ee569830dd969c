class ScpnError(Exception):
    """Base class for data/model errors surfaced by the toolkit."""


class ShapeMismatch(ScpnError):
    pass


class NonFiniteLoss(ScpnError):
    pass
