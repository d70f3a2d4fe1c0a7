"""
WSGI entry point for the read-only run registry (``/api/v1/runs/``).

Experiments themselves run from the command line (``python -m msqnet.cli``);
serving is only needed to browse recorded runs.
"""
import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')

application = get_wsgi_application()
