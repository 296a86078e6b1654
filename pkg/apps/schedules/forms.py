from django import forms

from .exceptions import InvalidParams
from .params import ScheduleParams


class ScheduleParamsField(forms.CharField):
    """Accepts 'R_ed,R_ef,S^m,A^m,R_ef^m' and cleans to ScheduleParams."""

    def to_python(self, value):
        value = super().to_python(value)
        if not value:
            return None
        try:
            return ScheduleParams.parse(value)
        except InvalidParams as exc:
            raise forms.ValidationError(str(exc))
