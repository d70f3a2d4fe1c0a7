# msqnet/v1/views.py
from drf_spectacular.utils import extend_schema
from rest_framework import viewsets
from rest_framework.decorators import action
from rest_framework.permissions import AllowAny
from rest_framework.response import Response

from ..models import ExperimentRun
from .serializers import EpochRecordSerializer, ExperimentRunSerializer


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Recorded training, evaluation, zero-shot and ablation runs."""
    permission_classes = [AllowAny]
    queryset = ExperimentRun.objects.all()
    serializer_class = ExperimentRunSerializer
    lookup_field = 'accession_code'
    lookup_value_regex = 'MSQR[0-9]+'

    def get_queryset(self):
        queryset = ExperimentRun.objects.all()
        command = self.request.query_params.get('command')
        if command:
            queryset = queryset.filter(command=command)
        config_hash = self.request.query_params.get('config_hash')
        if config_hash:
            queryset = queryset.filter(config_hash=config_hash)
        return queryset

    @extend_schema(responses=EpochRecordSerializer(many=True))
    @action(detail=True, methods=['get'])
    def epochs(self, request, accession_code=None):
        run = self.get_object()
        serializer = EpochRecordSerializer(run.epochs.all(), many=True)
        return Response(serializer.data)
