from django.apps import AppConfig


class PipelineCommandsConfig(AppConfig):
    name = 'apps.pipeline'
    verbose_name = '流水线命令'
