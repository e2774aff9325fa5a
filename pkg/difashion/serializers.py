from rest_framework import serializers


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare, also when nested."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError(
                    {key: ["Unknown configuration key."] for key in unknown}
                )
        return super().to_internal_value(data)
