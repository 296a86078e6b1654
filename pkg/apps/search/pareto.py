import math


def dominates(a, b):
    """a is no worse than b in both (cost, error) and better in at least one."""
    return a[0] <= b[0] and a[1] <= b[1] and tuple(a) != tuple(b)


def pareto_front(points, key=None):
    """Nondominated points under (minimise cost, minimise error), cheapest first.

    ``key`` maps a point to its (cost, error) pair. Identical pairs do not
    dominate each other, so duplicates on the front are all kept.
    """
    key = key or tuple
    front = []
    best_error, last = math.inf, None
    for point in sorted(points, key=lambda p: tuple(key(p))):
        cost, error = key(point)
        if error < best_error or (cost, error) == last:
            front.append(point)
            best_error, last = error, (cost, error)
    return front
