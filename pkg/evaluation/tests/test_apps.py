from django.apps import apps
from django.test import SimpleTestCase

from evaluation.apps import EvaluationAppConfig
from evaluation.models import EvaluationConfig


class EvaluationAppTests(SimpleTestCase):
    def test_app_config_is_registered(self):
        """Test the app registry loads the evaluation app config, apart from the run settings class"""
        config = apps.get_app_config("evaluation")

        self.assertIsInstance(config, EvaluationAppConfig)
        self.assertIsNot(EvaluationAppConfig, EvaluationConfig)
