import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from msqnet.exceptions import CheckpointError, ConfigurationError, NumericalError
from msqnet.serializers import dump_experiment, load_experiment

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
NUMERICAL_ABORT = 3


class ExperimentCommand(BaseCommand):
    """
    Shared options and error mapping for the experiment commands.

    Subclasses implement ``run(cfg, out, **options)``. Configuration problems
    exit with status 2, numerical aborts with status 3.
    """
    name = None

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, help='JSON experiment configuration (defaults apply when omitted)')
        parser.add_argument('--seed', type=int, help='Override the configuration seed')
        parser.add_argument('--out', type=str, help='Output directory (default: MSQNET_OUTPUT_DIR/<command>)')
        parser.add_argument(
            '--record',
            action='store_true',
            help='Persist the run in the experiment registry',
        )

    def load_config(self, options):
        return load_experiment(options.get('config'), options.get('seed'))

    def output_dir(self, options):
        out = Path(options['out']) if options.get('out') else Path(settings.MSQNET['OUTPUT_DIR']) / self.name
        out.mkdir(parents=True, exist_ok=True)
        return out

    def handle(self, *args, **options):
        try:
            cfg = self.load_config(options)
            out = self.output_dir(options)
            (out / 'config.json').write_text(dump_experiment(cfg) + '\n', encoding='utf-8')
            self.run(cfg, out, **{key: value for key, value in options.items() if key != 'out'})
        except (ConfigurationError, CheckpointError, ValidationError) as exc:
            raise CommandError(f'configuration error: {exc}', returncode=CONFIG_ERROR) from exc
        except NumericalError as exc:
            detail = f' (batch seeds {exc.batch_seeds})' if exc.batch_seeds else ''
            raise CommandError(f'numerical abort: {exc}{detail}', returncode=NUMERICAL_ABORT) from exc
        except OSError as exc:
            raise CommandError(f'cannot write output: {exc}', returncode=CONFIG_ERROR) from exc

    def run(self, cfg, out, **options):
        raise NotImplementedError

    def persist(self, record, command, options, metrics=None):
        if not options.get('record'):
            return None
        from msqnet.models import ExperimentRun

        run = ExperimentRun.objects.record(record, command, metrics=metrics)
        self.stdout.write(f'  recorded run {run.accession_code}')
        return run

    def write_metrics(self, metrics):
        for name, value in metrics.items():
            self.stdout.write(f'  {name}: {value:.6f}')
