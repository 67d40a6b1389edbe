from django.apps import AppConfig


class SchemasConfig(AppConfig):
    name = 'apps.schemas'
    verbose_name = '配置模型'
