"""Exception types shared by the library and the command-line front end."""


class ConfigError(ValueError):
    """Malformed or missing configuration."""


class AssumptionError(ValueError):
    """A modelling hypothesis does not hold for the configured network.

    ``label`` names the hypothesis (``"A3"``, ``"A4"``, ``"A4'"``,
    ``"pinning reachability"``, ...) so reports can say which one failed.
    """

    def __init__(self, label, message):
        super().__init__(f"[{label}] {message}")
        self.label = label


class DivergenceError(RuntimeError):
    """A simulation left the numerically meaningful range."""

    def __init__(self, round_index, node, value, threshold):
        super().__init__(
            f"divergence at round {round_index}: node {node} has |g_hat| = {abs(value):.3e} "
            f"> {threshold:.1e}; step size is probably above the stability bound"
        )
        self.round_index = round_index
        self.node = node
        self.value = value
        self.threshold = threshold
