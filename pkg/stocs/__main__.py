"""
``stocs`` console script: the package's management commands without a Django project.

When ``DJANGO_SETTINGS_MODULE`` is unset, a minimal in-memory configuration is installed
first; ``stocs solve scenario.yaml`` is then the same as ``manage.py solve scenario.yaml``.
"""

import os
import sys

STANDALONE_SETTINGS = {
    "INSTALLED_APPS": ["rest_framework", "stocs"],
    "CACHES": {"default": {"BACKEND": "django.core.cache.backends.locmem.LocMemCache"}},
    "TEMPLATES": [{"BACKEND": "django.template.backends.django.DjangoTemplates", "APP_DIRS": True}],
    "USE_TZ": True,
    "LOGGING": {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {"plain": {"format": "%(levelname)s %(name)s %(message)s"}},
        "handlers": {"console": {"class": "logging.StreamHandler", "formatter": "plain"}},
        "loggers": {"stocs": {"handlers": ["console"], "level": "WARNING"}},
    },
}


def main(argv: list[str] | None = None) -> None:
    from django.conf import settings

    if not os.environ.get("DJANGO_SETTINGS_MODULE") and not settings.configured:
        settings.configure(**STANDALONE_SETTINGS)

    from django.core.management import execute_from_command_line

    execute_from_command_line(["stocs", *(sys.argv[1:] if argv is None else argv)])


if __name__ == "__main__":
    main()
