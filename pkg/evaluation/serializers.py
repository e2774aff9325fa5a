from rest_framework import serializers

from difashion.serializers import StrictSerializer
from diffusion.conditioning import validate_eta
from diffusion.guidance import GuidanceScales
from evaluation.models import REPORT_METRICS, SOURCES, ClassifierConfig, EvaluationConfig

REPORT_FORMAT = "difashion-metrics/1"


class ClassifierConfigSerializer(StrictSerializer):
    width = serializers.IntegerField(default=16)
    feature_dim = serializers.IntegerField(default=64)
    steps = serializers.IntegerField(default=300)
    batch_size = serializers.IntegerField(default=32)
    lr = serializers.FloatField(default=1e-3)
    min_accuracy = serializers.FloatField(default=0.98, min_value=0.0, max_value=1.0)
    seed = serializers.IntegerField(default=0, min_value=0)

    def validate(self, attrs):
        data = super().validate(attrs)
        ClassifierConfig.validate_sizes(
            data["width"], data["feature_dim"], data["steps"], data["batch_size"], serializers.ValidationError
        )
        return data

    def create(self, validated_data):
        return ClassifierConfig(**validated_data)


class EvaluationConfigSerializer(StrictSerializer):
    split = serializers.ChoiceField(choices=("train", "valid", "test"), default="test")
    n_samples = serializers.IntegerField(default=100, min_value=1)
    source = serializers.ChoiceField(choices=SOURCES, default="model")
    seed = serializers.IntegerField(default=0, min_value=0)
    eta = serializers.FloatField(default=None, allow_null=True)
    same_category_negatives = serializers.BooleanField(default=False)

    def validate_eta(self, value):
        if value is not None:
            validate_eta(value, serializers.ValidationError)
        return value

    def create(self, validated_data):
        scales = validated_data.pop("scales", GuidanceScales())
        return EvaluationConfig(scales=scales, **validated_data)


class MetricsReportSerializer(serializers.Serializer):
    """Read-only rendering of a report with stable field names."""

    def to_representation(self, report):
        return {
            "format": REPORT_FORMAT,
            "metrics": {name: getattr(report, name) for name in REPORT_METRICS},
            "counts": dict(sorted(report.counts.items())),
            "config": report.config,
        }
