import configparser

from django import forms
from django.core.exceptions import ValidationError

from energy.functional import GLParams
from fields.lattice import PeriodicGrid, TWO_PI
from geometry.norms import build_norm
from geometry.profiles import CoefficientProfile
from main.enums import MeasureKind, NormKind, SectorKind, StepRule, choices
from main.exceptions import ResolutionError
from solver.sectors import Sector
from solver.sweep import GridSchedule, check_eps_list


def validate_positive(value):
    if not value > 0:
        raise ValidationError(f"must be positive, got {value!r}")


def validate_grid_size(value):
    if value < 8 or value % 2:
        raise ValidationError(f"must be an even integer >= 8, got {value!r}")


def _split(text):
    return [item.strip() for item in text.split(',') if item.strip()]


class NormForm(forms.Form):
    """[norm]: kind, coefficient profiles a and b, and the Randers drift"""

    kind = forms.ChoiceField(choices=choices(NormKind))
    a = forms.CharField()
    b = forms.CharField()
    beta_theta = forms.FloatField()
    beta_phi = forms.FloatField()

    def clean_a(self):
        return CoefficientProfile.parse(self.cleaned_data['a'])

    def clean_b(self):
        return CoefficientProfile.parse(self.cleaned_data['b'])

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        beta = (cleaned_data['beta_theta'], cleaned_data['beta_phi'])
        try:
            cleaned_data['norm'] = build_norm(cleaned_data['kind'], cleaned_data['a'], cleaned_data['b'], beta)
        except ValidationError as error:
            field = 'beta_theta' if cleaned_data['kind'] == NormKind.RANDERS.value else 'kind'
            self.add_error(field, error)
        return cleaned_data


class MeasureForm(forms.Form):
    kind = forms.ChoiceField(choices=choices(MeasureKind))

    def clean_kind(self):
        return MeasureKind(self.cleaned_data['kind'])


class GridForm(forms.Form):
    n_theta = forms.IntegerField(validators=[validate_grid_size])
    n_phi = forms.IntegerField(validators=[validate_grid_size])

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors:
            cleaned_data['grid'] = PeriodicGrid(cleaned_data['n_theta'], cleaned_data['n_phi'])
        return cleaned_data


class ParamsForm(forms.Form):
    lam = forms.FloatField(validators=[validate_positive])
    epsilon = forms.FloatField(validators=[validate_positive])

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors:
            cleaned_data['params'] = GLParams(cleaned_data['lam'], cleaned_data['epsilon'])
        return cleaned_data


class SectorForm(forms.Form):
    """[sector]: topological sector of the initial state, seeded noise and core pinning"""

    kind = forms.ChoiceField(choices=choices(SectorKind))
    winding = forms.IntegerField()
    separation = forms.FloatField()
    noise = forms.FloatField(min_value=0.0)
    pin_cores = forms.CharField()

    def clean_separation(self):
        separation = self.cleaned_data['separation']
        if not 0.0 < separation < TWO_PI:
            raise ValidationError(f"must lie strictly between 0 and 2 pi, got {separation!r}")
        return separation

    def clean_pin_cores(self):
        value = self.cleaned_data['pin_cores'].lower()
        if value not in configparser.ConfigParser.BOOLEAN_STATES:
            raise ValidationError(f"expected true or false, got {value!r}")
        return configparser.ConfigParser.BOOLEAN_STATES[value]

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors:
            cleaned_data['sector'] = Sector(cleaned_data['kind'], cleaned_data['winding'], cleaned_data['separation'])
        return cleaned_data


class SolverForm(forms.Form):
    max_iters = forms.IntegerField(min_value=1)
    grad_tol = forms.FloatField(validators=[validate_positive])
    step_rule = forms.ChoiceField(choices=choices(StepRule))
    fixed_step = forms.FloatField(required=False, validators=[validate_positive])
    gauge_reproject_every = forms.IntegerField(min_value=0)
    checkpoint_every = forms.IntegerField(min_value=0)
    min_step = forms.FloatField(validators=[validate_positive])

    def clean_step_rule(self):
        return StepRule(self.cleaned_data['step_rule'])

    def clean(self):
        cleaned_data = super().clean()
        if not self.errors and cleaned_data['step_rule'] is StepRule.FIXED and cleaned_data['fixed_step'] is None:
            self.add_error('fixed_step', "required when step_rule = fixed")
        return cleaned_data


class SweepForm(forms.Form):
    """[sweep]: decreasing eps values and the grid for each"""

    eps_list = forms.CharField(required=False)
    resolution = forms.FloatField(min_value=4.0)
    n_list = forms.CharField(required=False)

    def clean_eps_list(self):
        try:
            values = [float(item) for item in _split(self.cleaned_data['eps_list'])]
        except ValueError:
            raise ValidationError("expected comma-separated numbers")
        return tuple(check_eps_list(values))

    def clean_n_list(self):
        items = _split(self.cleaned_data['n_list'])
        if not items:
            return None
        try:
            return tuple(int(item) for item in items)
        except ValueError:
            raise ValidationError("expected comma-separated integers")

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        schedule = GridSchedule(cleaned_data['resolution'], cleaned_data['n_list'])
        try:
            schedule.grids(cleaned_data['eps_list'])
        except ResolutionError as error:
            for violation in error.violations:
                self.add_error('n_list', violation)
        except ValidationError as error:
            self.add_error('n_list', error)
        cleaned_data['schedule'] = schedule
        return cleaned_data


class TorusForm(forms.Form):
    m = forms.IntegerField()
    n = forms.IntegerField()


class OutputForm(forms.Form):
    directory = forms.CharField()
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1)


SECTION_FORMS = {
    'norm': NormForm,
    'measure': MeasureForm,
    'grid': GridForm,
    'params': ParamsForm,
    'sector': SectorForm,
    'solver': SolverForm,
    'sweep': SweepForm,
    'torus': TorusForm,
    'output': OutputForm,
}
