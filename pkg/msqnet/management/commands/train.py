from msqnet.checkpoint import save_model
from msqnet.choices import RunCommand
from msqnet.exceptions import NumericalError
from msqnet.harness import prepare_experiment, train
from msqnet.metrics import write_report

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train MSQNet on the synthetic video set and write checkpoint, run log and metrics'
    name = 'train'

    def run(self, cfg, out, **options):
        model, train_set, eval_set = prepare_experiment(cfg)
        self.stdout.write(
            f'Training on {len(train_set)} videos over {len(train_set.class_names)} classes '
            f'for {cfg.train.epochs} epochs (config {cfg.hash[:12]})'
        )
        try:
            record = train(model, train_set, eval_set, cfg.train, cfg.canonical, seed=cfg.seed)
        except NumericalError as exc:
            record = getattr(exc, 'record', None)
            if record is not None:
                (out / 'run.log').write_text(record.to_log(), encoding='utf-8')
                self.persist(record, RunCommand.TRAIN, options)
            raise
        save_model(model, out / 'checkpoint.msqk')
        (out / 'run.log').write_text(record.to_log(), encoding='utf-8')
        write_report(record.final_metrics, out / 'metrics.txt')
        self.persist(record, RunCommand.TRAIN, options)

        self.write_metrics(record.final_metrics)
        self.stdout.write(self.style.SUCCESS(f'Checkpoint {out / "checkpoint.msqk"} (sha256 {record.checksum[:12]})'))
