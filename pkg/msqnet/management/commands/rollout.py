from django.core.management.base import CommandError

from msqnet.checkpoint import load_model
from msqnet.harness import prepare_experiment
from msqnet.rollout import attention_rollout, export_heatmap

from ._base import CONFIG_ERROR, ExperimentCommand


class Command(ExperimentCommand):
    help = 'Write per-class attention rollout heatmaps (PGM) for one evaluation video'
    name = 'rollout'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', type=str, help='Checkpoint to load (default: freshly initialised model)')
        parser.add_argument('--video', type=int, default=0, help='Index into the evaluation set')

    def run(self, cfg, out, **options):
        model, _, eval_set = prepare_experiment(cfg.replace(n_train=0))
        if options.get('checkpoint'):
            load_model(model, options['checkpoint'])
        index = options['video']
        if not 0 <= index < len(eval_set):
            raise CommandError(f'--video must lie in [0, {len(eval_set)})', returncode=CONFIG_ERROR)
        video = eval_set.videos[index]
        output = model(video.pixels, keep_attention=True)
        heat = attention_rollout(
            output.trace, output.encoder_attentions, cfg.model.encoder.grid, class_names=model.class_names
        )
        written = export_heatmap(heat, out)

        labels = [model.class_names[k] for k in video.label_indices]
        self.stdout.write(f'Video {index} (seed {video.seed}), labels: {", ".join(labels)}')
        self.stdout.write(self.style.SUCCESS(f'{len(written)} heatmaps written to {out}'))
