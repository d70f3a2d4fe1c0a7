"""
Single entry point for the experiment pipelines.

    python -m msqnet.cli train --config a.json --seed 7 --out runs/a

Every subcommand is a management command of the ``msqnet`` app; this module
only maps the subcommand names and turns command errors into exit statuses.
"""
import os
import sys

USAGE = """usage: python -m msqnet.cli <command> [--config PATH] [--seed N] [--out DIR] [options]

commands:
  train              train a model and write checkpoint, run log and metrics
  eval               evaluate a checkpoint (--checkpoint PATH)
  zeroshot           zero-shot protocol over random splits (--seen, --splits, --variant)
  ablate             query-fusion / text-init factorial and frame-count sweep (--seeds)
  rollout            attention rollout heatmaps for one video (--checkpoint, --video)
  export-embeddings  pooled and per-class query embeddings as CSV (--checkpoint)
  gradcheck          tape gradients against central differences (--step, --tol, --max-coords)

exit status: 0 success, 2 configuration error, 3 numerical abort
"""

COMMANDS = {
    'train': 'train',
    'eval': 'eval',
    'zeroshot': 'zeroshot',
    'ablate': 'ablate',
    'rollout': 'rollout',
    'export-embeddings': 'export_embeddings',
    'gradcheck': 'gradcheck',
}

CONFIG_ERROR = 2


def run_command(argv, stdout=None, stderr=None):
    """Run one subcommand; returns the process exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(argv)
    if not argv or argv[0] not in COMMANDS:
        if argv and argv[0] not in ('-h', '--help'):
            stderr.write(f'unknown command {argv[0]!r}\n')
        stderr.write(USAGE)
        return CONFIG_ERROR

    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    import django
    from django.core.management import call_command
    from django.core.management.base import CommandError

    django.setup()
    try:
        call_command(COMMANDS[argv[0]], *argv[1:], stdout=stdout, stderr=stderr)
    except CommandError as exc:
        stderr.write(f'{exc}\n')
        # argument parsing errors carry the default status 1
        return exc.returncode if exc.returncode > 1 else CONFIG_ERROR
    return 0


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
