class ScheduleError(RuntimeError):
    pass


class InvalidParams(ScheduleError, ValueError):
    pass


class ScheduleAborted(ScheduleError):
    """The generator failed for good in the middle of a schedule."""
