class TaskError(ValueError):
    pass


class UnsupportedDifficulty(TaskError):
    def __init__(self, n):
        super().__init__(f"Difficulty {n} is not supported, use one of 32, 64, 128")
        self.n = n


class UnknownTask(TaskError):
    def __init__(self, name):
        super().__init__(f"Unknown task '{name}'")
        self.name = name


class MalformedProblem(TaskError):
    pass
