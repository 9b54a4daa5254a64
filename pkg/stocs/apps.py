from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class Config(AppConfig):
    name = "stocs"
    label = "stocs"
    verbose_name = _("STOCS trajectory optimization")
    default = True

    def ready(self) -> None:
        # Register signal handlers
        from . import handlers  # NOQA
