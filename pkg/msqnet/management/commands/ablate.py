from msqnet.choices import RunCommand
from msqnet.harness import ablation_suite

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Run the query-fusion x text-init factorial and the frame-count sweep over several seeds'
    name = 'ablate'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--seeds', type=int, help='Number of seeds, counted up from the configured seed')

    def run(self, cfg, out, **options):
        if options.get('seeds'):
            cfg = cfg.replace(ablation_seeds=options['seeds'])
        report = ablation_suite(cfg)
        for result in report.results:
            self.persist(result.record, RunCommand.ABLATE, options)
        (out / 'ablation.txt').write_text(report.format(), encoding='utf-8')

        for cell, stats in report.summary().items():
            mean, std = stats['mAP']
            self.stdout.write(f'  {cell}: mAP {mean:.4f} ± {std:.4f}')
        self.stdout.write(self.style.SUCCESS(f'Ablation table written to {out / "ablation.txt"}'))
