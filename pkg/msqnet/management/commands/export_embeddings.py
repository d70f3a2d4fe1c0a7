from msqnet.checkpoint import load_model
from msqnet.export import export_embeddings
from msqnet.harness import prepare_experiment

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Export pooled video embeddings and per-class decoder queries as CSV'
    name = 'export-embeddings'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', type=str, help='Checkpoint to load (default: freshly initialised model)')

    def run(self, cfg, out, **options):
        model, _, eval_set = prepare_experiment(cfg.replace(n_train=0))
        if options.get('checkpoint'):
            load_model(model, options['checkpoint'])
        path = out / 'embeddings.csv'
        rows = export_embeddings(model, eval_set, path, cfg.train.batch_size)
        self.stdout.write(self.style.SUCCESS(f'{rows} rows written to {path}'))
