from django.apps import AppConfig


class EvaluationAppConfig(AppConfig):
    name = "evaluation"
    verbose_name = "Outfit evaluation"
