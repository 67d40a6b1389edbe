from django.apps import AppConfig


class ServicesConfig(AppConfig):
    name = 'apps.services'
    verbose_name = '行情、模型与回测服务'
