import numpy as np
from django.core.management.base import CommandError

from msqnet import decoder
from msqnet.harness import ExperimentConfig, prepare_experiment
from msqnet.tensor import grad_check

from ._base import NUMERICAL_ABORT, ExperimentCommand


class Command(ExperimentCommand):
    help = 'Compare tape gradients of the full training loss with central differences'
    name = 'gradcheck'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--step', dest='h', type=float, default=1e-5, help='Finite-difference step h')
        parser.add_argument('--tol', type=float, default=1e-4, help='Maximum accepted relative error')
        parser.add_argument('--max-coords', type=int, help='Check this many random coordinates per tensor')
        parser.add_argument('--videos', type=int, default=1, help='Batch size of the checked loss')

    def load_config(self, options):
        if options.get('config'):
            return super().load_config(options)
        cfg = ExperimentConfig.tiny()
        return cfg.with_seed(options['seed']) if options.get('seed') is not None else cfg

    def run(self, cfg, out, **options):
        model, train_set, _ = prepare_experiment(cfg.replace(n_train=max(options['videos'], 1), n_eval=0))
        pixels, labels, _ = next(train_set.batches(options['videos']))
        task_mode = model.config.task_mode

        def objective():
            return decoder.loss(model(pixels).logits, labels, task_mode)

        try:
            report = grad_check(objective, dict(model.named_parameters()), options['h'], options['tol'],
                                max_coords=options.get('max_coords'), seed=cfg.seed)
        except ValueError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        lines = [f'max_rel_error={report.max_rel_error:.6e}', f'checked={report.n_checked}', f'tol={report.tol}']
        lines.extend(
            f'failure {f.parameter}{list(f.index)} analytic={f.analytic:.6e} numeric={f.numeric:.6e}'
            for f in report.failures
        )
        (out / 'gradcheck.txt').write_text('\n'.join(lines) + '\n', encoding='utf-8')

        self.stdout.write(f'max relative error {report.max_rel_error:.3e} over {report.n_checked} coordinates')
        if not report.passed or not np.isfinite(report.max_rel_error):
            raise CommandError(
                f'gradient check failed: {len(report.failures)} coordinates above {report.tol}',
                returncode=NUMERICAL_ABORT,
            )
        self.stdout.write(self.style.SUCCESS('gradient check passed'))
