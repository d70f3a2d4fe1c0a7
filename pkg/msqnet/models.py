from django.db import models, transaction

from .base_models import AccessionCodeModel
from .choices import RunCommand, RunStatus


class ExperimentRunManager(models.Manager):
    @transaction.atomic
    def record(self, run_record, command, metrics=None):
        """Persist a harness ``RunRecord`` and its per-epoch rows."""
        run = self.create(
            command=command,
            config_hash=run_record.config_hash,
            config='\n'.join(run_record.config_lines),
            seed=run_record.seed,
            status=RunStatus.ABORTED if run_record.aborted else RunStatus.COMPLETED,
            wall_clock=run_record.wall_clock,
            checksum=run_record.checksum,
            initial_metrics=run_record.initial_metrics,
            metrics=metrics if metrics is not None else run_record.final_metrics,
        )
        EpochRecord.objects.bulk_create([
            EpochRecord(run=run, epoch=result.epoch, loss=result.loss, metrics=result.metrics)
            for result in run_record.epochs
        ])
        return run


class ExperimentRun(AccessionCodeModel):
    PREFIX = 'MSQR'
    command = models.CharField(max_length=20, choices=RunCommand.choices)
    config_hash = models.CharField(max_length=64, db_index=True)
    config = models.TextField(help_text='Canonical sorted key=value listing of the experiment configuration')
    seed = models.IntegerField()
    status = models.CharField(max_length=20, choices=RunStatus.choices, default=RunStatus.COMPLETED)
    wall_clock = models.FloatField(help_text='Seconds')
    checksum = models.CharField(max_length=64, blank=True)
    initial_metrics = models.JSONField(default=dict, blank=True)
    metrics = models.JSONField(default=dict, blank=True)

    objects = ExperimentRunManager()

    class Meta(AccessionCodeModel.Meta):
        ordering = ['id']

    def __str__(self):
        return f'{self.accession_code}: {self.command} seed={self.seed} ({self.status})'


class EpochRecord(models.Model):
    run = models.ForeignKey(ExperimentRun, related_name='epochs', on_delete=models.CASCADE)
    epoch = models.PositiveIntegerField()
    loss = models.FloatField()
    metrics = models.JSONField(default=dict, blank=True)

    class Meta:
        unique_together = ('run', 'epoch')
        ordering = ['run', 'epoch']

    def __str__(self):
        return f'{self.run.accession_code} epoch {self.epoch}'
