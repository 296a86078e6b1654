"""
Shared plumbing for the experiment management commands.

Every command reads an optional YAML config, layers its flags on top and
turns domain errors into CommandError with one of the exit codes below.
"""
import logging
from pathlib import Path

from django import forms
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.backends.exceptions import BudgetExceeded, GeneratorFailure, OracleConfigError
from apps.policy.exceptions import PolicyError
from apps.schedules.exceptions import InvalidParams, ScheduleAborted, ScheduleError
from apps.search.exceptions import InvalidBudget, SearchError
from apps.tasks.exceptions import TaskError

from .config import load_config
from .exceptions import ConfigError, ExperimentError
from .forms import SeedsField, TaskField

logger = logging.getLogger(__name__)

SUCCESS = 0
USAGE_ERROR = 2
CONFIG_ERROR = 3
BUDGET_EXHAUSTED = 4
BACKEND_FAILURE = 5
RUN_ABORTED = 6

CONFIG_ERRORS = (ConfigError, forms.ValidationError, TaskError, InvalidParams, OracleConfigError,
                 InvalidBudget)


def _message(exc):
    if isinstance(exc, forms.ValidationError):
        return '; '.join(exc.messages)
    return str(exc)


class ExperimentCommand(BaseCommand):

    def add_arguments(self, parser):
        parser.add_argument('--config', type=Path, help="YAML experiment config")
        parser.add_argument('--backend', choices=('oracle', 'http'), help="Overrides the config backend")
        parser.add_argument('--seed', type=int, help="A single instance seed")
        parser.add_argument('--seeds', help="Comma-separated seeds or an inclusive range 'a..b'")
        parser.add_argument('--out', type=Path, help="Results directory (default RESULTS_DIR)")

    def handle(self, *args, **options):
        try:
            config = load_config(options.pop('config'), backend=options['backend'])
            return self.run(config, **options)
        except BudgetExceeded as exc:
            raise CommandError(str(exc), returncode=BUDGET_EXHAUSTED) from exc
        except CONFIG_ERRORS as exc:
            raise CommandError(_message(exc), returncode=CONFIG_ERROR) from exc
        except (GeneratorFailure, ScheduleAborted) as exc:
            raise CommandError(str(exc), returncode=BACKEND_FAILURE) from exc
        except (ScheduleError, PolicyError, SearchError, ExperimentError) as exc:
            raise CommandError(str(exc), returncode=RUN_ABORTED) from exc

    def run(self, config, **options):
        raise NotImplementedError

    def task(self, options):
        return TaskField().clean(options['task'])

    def seeds(self, config, options, default=(0,)):
        if options.get('seeds'):
            return SeedsField().clean(options['seeds'])
        if options.get('seed') is not None:
            return [options['seed']]
        return list(config.seeds) or list(default)

    def out_dir(self, options):
        return Path(options.get('out') or settings.RESULTS_DIR)

    def done(self, message):
        logger.info(message)
        return message
