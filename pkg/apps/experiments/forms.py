from django import forms

from apps.backends.oracle import TRANSITION_PRESETS
from apps.tasks.exceptions import TaskError
from apps.tasks.tasks import parse_task_name

BACKENDS = (('oracle', 'oracle'), ('http', 'http'))
PROBABILITY_KEYS = ('p_solve', 'p_refine', 'p_aggregate', 'p_policy', 'p_policy_nocot')
CORRUPTION_KEYS = ('swaps', 'duplications', 'extra', 'missing')


class TaskField(forms.CharField):
    """'sorting32' or 'set-intersection64', cleaned to (TaskKind, n)."""

    def to_python(self, value):
        value = super().to_python(value)
        if not value:
            return None
        try:
            return parse_task_name(value)
        except TaskError as exc:
            raise forms.ValidationError(str(exc))


class SeedsField(forms.Field):
    """A list of integers, a comma-separated string, or an inclusive range 'a..b'."""

    def to_python(self, value):
        if value in self.empty_values:
            return []
        try:
            if isinstance(value, int):
                return [value]
            if isinstance(value, str):
                if '..' in value:
                    low, high = value.split('..')
                    return list(range(int(low), int(high) + 1))
                return [int(part) for part in value.split(',')]
            return [int(part) for part in value]
        except (TypeError, ValueError):
            raise forms.ValidationError(f"Seeds must be integers, got {value!r}") from None


class IntegerListField(forms.CharField):
    def to_python(self, value):
        value = super().to_python(value)
        if not value:
            return []
        try:
            return [int(part) for part in value.split(',')]
        except ValueError:
            raise forms.ValidationError(f"Expected comma-separated integers, got '{value}'") from None


class ConfigForm(forms.Form):
    backend = forms.ChoiceField(choices=BACKENDS, required=False)
    endpoint = forms.URLField(required=False)
    model = forms.CharField(required=False)
    temperature = forms.FloatField(min_value=0, required=False)
    budget = forms.IntegerField(min_value=1, required=False)
    ensemble_size = forms.IntegerField(min_value=1, max_value=15, required=False)
    epsilon = forms.IntegerField(min_value=1, required=False)
    seeds = SeedsField(required=False)
    retries = forms.IntegerField(min_value=0, required=False)
    timeout = forms.FloatField(min_value=0.001, required=False)
    oracle_preset = forms.ChoiceField(choices=[(name, name) for name in TRANSITION_PRESETS],
                                      required=False)
    oracle = forms.JSONField(required=False)

    def clean_oracle(self):
        rates = self.cleaned_data.get('oracle') or {}
        if not isinstance(rates, dict):
            raise forms.ValidationError("oracle must be a mapping of rates and corruption counts")
        unknown = set(rates) - set(PROBABILITY_KEYS) - set(CORRUPTION_KEYS)
        if unknown:
            raise forms.ValidationError(f"Unknown oracle keys: {', '.join(sorted(unknown))}")
        return rates
