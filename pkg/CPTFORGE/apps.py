from django.apps import AppConfig


class CptForgeConfig(AppConfig):
    name = 'CPTFORGE'
    verbose_name = 'Continual-pretraining forge'
