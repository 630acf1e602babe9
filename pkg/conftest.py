import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "rfm_app.settings")
django.setup()
