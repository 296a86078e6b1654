import itertools
from dataclasses import dataclass

from .exceptions import InvalidParams

MULTIPLICITIES = (1, 5, 10, 15, 20)
FLAGS = (0, 1)


@dataclass(frozen=True)
class ScheduleParams:
    """(R_ed, R_ef, S^m, A^m, R_ef^m) of a static schedule."""

    allow_reduce: bool
    allow_refine: bool
    solve_multiplicity: int
    aggregate_multiplicity: int
    refine_multiplicity: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'allow_reduce', bool(self.allow_reduce))
        object.__setattr__(self, 'allow_refine', bool(self.allow_refine))
        for name in ('solve_multiplicity', 'aggregate_multiplicity', 'refine_multiplicity'):
            if getattr(self, name) not in MULTIPLICITIES:
                raise InvalidParams(f"{name} must be one of {MULTIPLICITIES}, got {getattr(self, name)}")

    def as_tuple(self):
        return (int(self.allow_reduce), int(self.allow_refine), self.solve_multiplicity,
                self.aggregate_multiplicity, self.refine_multiplicity)

    @property
    def label(self):
        return '-'.join(str(v) for v in self.as_tuple())

    def to_dict(self):
        return {
            'allow_reduce': self.allow_reduce,
            'allow_refine': self.allow_refine,
            'solve_multiplicity': self.solve_multiplicity,
            'aggregate_multiplicity': self.aggregate_multiplicity,
            'refine_multiplicity': self.refine_multiplicity,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    @classmethod
    def parse(cls, text):
        """'1,0,5,5,1' -> params; a '-' refine multiplicity (unused without refine) reads as 1."""
        fields = [field.strip() for field in str(text).split(',')]
        if len(fields) != 5:
            raise InvalidParams(f"Expected five comma-separated values, got '{text}'")
        if fields[4] in ('-', '–', ''):
            fields[4] = '1'
        try:
            r_ed, r_ef, s_m, a_m, r_m = (int(field) for field in fields)
        except ValueError:
            raise InvalidParams(f"Schedule parameters must be integers, got '{text}'") from None
        if r_ed not in FLAGS or r_ef not in FLAGS:
            raise InvalidParams("R_ed and R_ef must be 0 or 1")
        return cls(r_ed, r_ef, s_m, a_m, r_m)


def search_space():
    """All 2·2·5·5·5 = 500 parameter tuples."""
    return [
        ScheduleParams(*values)
        for values in itertools.product(FLAGS, FLAGS, MULTIPLICITIES, MULTIPLICITIES, MULTIPLICITIES)
    ]
