import optuna
from django.apps import AppConfig


class SearchConfig(AppConfig):
    name = 'apps.search'
    verbose_name = 'Schedule parameter search'

    def ready(self):
        # trial progress is logged by run_search itself
        optuna.logging.set_verbosity(optuna.logging.WARNING)
