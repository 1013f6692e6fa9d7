from django.apps import AppConfig


class VorticesConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'vortices'
    verbose_name = 'Vortex analysis'
