class GraphError(ValueError):
    """Raised when a delta cannot be applied to a thought graph."""


class UnknownNode(GraphError):
    def __init__(self, node_id):
        super().__init__(f"Node {node_id} is not in the graph")
        self.node_id = node_id


class IdCollision(GraphError):
    def __init__(self, node_id):
        super().__init__(f"Node id {node_id} is already in use")
        self.node_id = node_id


class TransformError(ValueError):
    """Raised when a transformation request violates its preconditions."""


class InvalidTarget(TransformError):
    pass


class NotDecomposable(TransformError):
    pass


class RefinePerfectNode(TransformError):
    pass


class WouldOrphanProblem(TransformError):
    pass


class IncompatibleTargets(TransformError):
    pass
