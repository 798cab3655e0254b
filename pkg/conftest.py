import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'FORGE.settings')
django.setup()
