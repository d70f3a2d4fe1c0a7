#msqnet/choices.py
from django.db import models


class AttentionMode(models.TextChoices):
    JOINT = 'joint', 'Joint space-time'
    DIVIDED = 'divided', 'Divided (temporal then spatial)'


class TaskMode(models.TextChoices):
    SINGLE_LABEL = 'single_label', 'Single-label (softmax)'
    MULTI_LABEL = 'multi_label', 'Multi-label (sigmoid)'


class TextEmbedderMode(models.TextChoices):
    HASHED = 'hashed', 'Hashed'
    COMPOSITIONAL = 'compositional', 'Compositional'


class HeadMode(models.TextChoices):
    PER_CLASS = 'per_class', 'Per-class readout'
    SHARED = 'shared', 'Shared readout'


class SplitMode(models.TextChoices):
    SUPERVISED = 'supervised', 'Supervised'
    ZERO_SHOT = 'zero_shot', 'Zero-shot'


class ZeroShotVariant(models.TextChoices):
    VANILLA = 'vanilla', 'Vanilla MSQNet'
    TEXT_INIT = 'text_init', 'Vanilla MSQNet + Text Init'
    FULL = 'full', 'MSQNet'


class RunStatus(models.TextChoices):
    COMPLETED = 'completed', 'Completed'
    ABORTED = 'aborted', 'Aborted'


class RunCommand(models.TextChoices):
    TRAIN = 'train', 'train'
    EVAL = 'eval', 'eval'
    ZEROSHOT = 'zeroshot', 'zeroshot'
    ABLATE = 'ablate', 'ablate'
