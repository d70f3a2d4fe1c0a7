# Generated by Django 5.1.6 on 2026-10-18 12:00

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('accession_code', models.CharField(blank=True, max_length=255, unique=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('command', models.CharField(choices=[('train', 'train'), ('eval', 'eval'), ('zeroshot', 'zeroshot'), ('ablate', 'ablate')], max_length=20)),
                ('config_hash', models.CharField(db_index=True, max_length=64)),
                ('config', models.TextField(help_text='Canonical sorted key=value listing of the experiment configuration')),
                ('seed', models.IntegerField()),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('aborted', 'Aborted')], default='completed', max_length=20)),
                ('wall_clock', models.FloatField(help_text='Seconds')),
                ('checksum', models.CharField(blank=True, max_length=64)),
                ('initial_metrics', models.JSONField(blank=True, default=dict)),
                ('metrics', models.JSONField(blank=True, default=dict)),
            ],
            options={
                'ordering': ['id'],
                'abstract': False,
            },
        ),
        migrations.CreateModel(
            name='EpochRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField()),
                ('loss', models.FloatField()),
                ('metrics', models.JSONField(blank=True, default=dict)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='msqnet.experimentrun')),
            ],
            options={
                'ordering': ['run', 'epoch'],
                'unique_together': {('run', 'epoch')},
            },
        ),
    ]
