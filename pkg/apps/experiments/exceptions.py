class ExperimentError(RuntimeError):
    pass


class ConfigError(ExperimentError, ValueError):
    """An experiment config file or command-line value did not validate."""
