# msqnet/v1/serializers.py
from rest_framework import serializers
from drf_spectacular.utils import extend_schema_serializer

from ..models import EpochRecord, ExperimentRun


@extend_schema_serializer(component_name="EpochRecordV1")
class EpochRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = EpochRecord
        fields = ['epoch', 'loss', 'metrics']


@extend_schema_serializer(component_name="ExperimentRunV1")
class ExperimentRunSerializer(serializers.ModelSerializer):
    epoch_count = serializers.IntegerField(source='epochs.count', read_only=True)

    class Meta:
        model = ExperimentRun
        fields = [
            'accession_code',
            'command',
            'status',
            'seed',
            'config_hash',
            'config',
            'wall_clock',
            'checksum',
            'initial_metrics',
            'metrics',
            'epoch_count',
            'created_at',
        ]
        read_only_fields = fields
