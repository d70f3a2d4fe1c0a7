import time

from msqnet.checkpoint import load_model
from msqnet.choices import RunCommand
from msqnet.harness import RunRecord, evaluate, prepare_experiment
from msqnet.metrics import write_report

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Evaluate a checkpoint on the evaluation split of the configured dataset'
    name = 'eval'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', type=str, required=True, help='Checkpoint written by the train command')

    def run(self, cfg, out, **options):
        started = time.perf_counter()
        model, _, eval_set = prepare_experiment(cfg.replace(n_train=0))
        load_model(model, options['checkpoint'])
        outcome = evaluate(model, eval_set, cfg.train.batch_size, cfg.train.subset_accuracy)
        write_report(outcome.metrics, out / 'metrics.txt')
        record = RunRecord(
            config_lines=cfg.canonical,
            seed=cfg.seed,
            initial_metrics=outcome.metrics,
            wall_clock=time.perf_counter() - started,
            checksum=model.checksum(),
        )
        self.persist(record, RunCommand.EVAL, options)

        self.stdout.write(f'Evaluated {len(eval_set)} videos')
        self.write_metrics(outcome.metrics)
        self.stdout.write(self.style.SUCCESS(f'Metrics written to {out / "metrics.txt"}'))
