from django.apps import AppConfig


class MsqnetConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'msqnet'
    verbose_name = 'MSQNet experiments'

    def ready(self):
        """Push the debug-mode finiteness check into the tensor module."""
        from django.conf import settings

        from .tensor import set_check_finite

        set_check_finite(getattr(settings, 'MSQNET', {}).get('CHECK_FINITE', False))
