from msqnet.choices import RunCommand, ZeroShotVariant
from msqnet.data import ZERO_SHOT_FRACTIONS
from msqnet.harness import zero_shot_suite
from msqnet.metrics import write_report

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Zero-shot protocol: train on seen classes, score unseen ones, over seeded random splits'
    name = 'zeroshot'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--seen', type=float, choices=ZERO_SHOT_FRACTIONS, help='Seen class fraction')
        parser.add_argument('--splits', type=int, help='Number of random splits')
        parser.add_argument(
            '--variant',
            choices=ZeroShotVariant.values,
            action='append',
            help='Ladder variant to run; repeat for several (default: all three)',
        )

    def run(self, cfg, out, **options):
        report = zero_shot_suite(cfg, options.get('variant'), options.get('seen'), options.get('splits'))
        for outcome in report.outcomes:
            name = f'{outcome.variant}_split{outcome.split_index:02d}.txt'
            write_report({**outcome.metrics, 'null_p95': outcome.null_p95}, out / name)
            self.persist(outcome.record, RunCommand.ZEROSHOT, options, metrics=outcome.metrics)
        (out / 'summary.txt').write_text(report.format(), encoding='utf-8')

        for variant, stats in report.summary().items():
            mean, std = stats['mAP']
            self.stdout.write(
                f'  {variant}: unseen mAP {mean:.4f} ± {std:.4f}, '
                f'above chance in {stats["above_chance"]}/{stats["splits"]} splits'
            )
        self.stdout.write(self.style.SUCCESS(f'Summary written to {out / "summary.txt"}'))
