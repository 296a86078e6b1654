from django.apps import AppConfig


class BackendsConfig(AppConfig):
    name = 'apps.backends'
    verbose_name = 'Generator backends'
