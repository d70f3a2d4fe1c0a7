# msqnet/tests/v1/test_urls.py
from django.test import TestCase
from django.urls import reverse

from msqnet.choices import RunCommand, RunStatus
from msqnet.harness import EpochResult, RunRecord
from msqnet.models import EpochRecord, ExperimentRun


def _record(seed=0, epochs=2, aborted=False):
    return RunRecord(
        config_lines=[f'seed={seed}', 'train.epochs=2'],
        seed=seed,
        initial_metrics={'mAP': 0.25},
        epochs=[EpochResult(epoch=e, loss=1.0 / e, metrics={'mAP': 0.25 + 0.1 * e}) for e in range(1, epochs + 1)],
        wall_clock=1.5,
        checksum='ab' * 32,
        aborted=aborted,
    )


class ExperimentRunUrlTestCase(TestCase):
    """Read-only registry of recorded runs"""

    def setUp(self):
        self.train_run = ExperimentRun.objects.record(_record(seed=1), RunCommand.TRAIN)
        self.eval_run = ExperimentRun.objects.record(_record(seed=2, epochs=0), RunCommand.EVAL)
        self.aborted_run = ExperimentRun.objects.record(_record(seed=3, epochs=1, aborted=True), RunCommand.TRAIN)

    def test_accession_codes(self):
        self.assertEqual(self.train_run.accession_code, f'MSQR{self.train_run.pk}')
        self.assertEqual(ExperimentRun.objects.get(pk=self.eval_run.pk).accession_code, f'MSQR{self.eval_run.pk}')

    def test_record_stores_epochs_and_status(self):
        self.assertEqual(EpochRecord.objects.filter(run=self.train_run).count(), 2)
        self.assertEqual(self.train_run.metrics, {'mAP': 0.45})
        self.assertEqual(self.eval_run.metrics, {'mAP': 0.25})
        self.assertEqual(self.aborted_run.status, RunStatus.ABORTED)
        self.assertEqual(self.train_run.config, 'seed=1\ntrain.epochs=2')

    def test_run_list_endpoint(self):
        response = self.client.get(reverse('run-list'))
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(data['count'], 3)
        self.assertEqual(
            [run['accession_code'] for run in data['results']],
            [self.train_run.accession_code, self.eval_run.accession_code, self.aborted_run.accession_code],
        )

    def test_run_detail_endpoint(self):
        url = reverse('run-detail', kwargs={'accession_code': self.train_run.accession_code})
        response = self.client.get(url)
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(data['command'], RunCommand.TRAIN)
        self.assertEqual(data['seed'], 1)
        self.assertEqual(data['epoch_count'], 2)
        self.assertEqual(data['config_hash'], _record(seed=1).config_hash)

    def test_epochs_action(self):
        url = reverse('run-epochs', kwargs={'accession_code': self.train_run.accession_code})
        response = self.client.get(url)
        self.assertEqual(response.status_code, 200)
        self.assertEqual([row['epoch'] for row in response.json()], [1, 2])
        self.assertAlmostEqual(response.json()[1]['loss'], 0.5)

    def test_filters(self):
        response = self.client.get(reverse('run-list'), {'command': RunCommand.EVAL})
        self.assertEqual(response.json()['count'], 1)
        config_hash = self.train_run.config_hash
        response = self.client.get(reverse('run-list'), {'config_hash': config_hash})
        self.assertEqual([run['seed'] for run in response.json()['results']], [1])

    def test_unknown_run_is_not_found(self):
        response = self.client.get('/api/v1/runs/MSQR999999/')
        self.assertEqual(response.status_code, 404)

    def test_runs_are_read_only(self):
        url = reverse('run-detail', kwargs={'accession_code': self.train_run.accession_code})
        self.assertEqual(self.client.delete(url).status_code, 405)
        self.assertEqual(self.client.post(reverse('run-list'), {}).status_code, 405)

    def test_pagination(self):
        for seed in range(10, 20):
            ExperimentRun.objects.record(_record(seed=seed, epochs=0), RunCommand.ABLATE)
        data = self.client.get(reverse('run-list')).json()
        self.assertEqual(data['count'], 13)
        self.assertEqual(len(data['results']), 10)
        self.assertIsNotNone(data['next'])

    def test_schema_endpoint(self):
        response = self.client.get('/schema/')
        self.assertEqual(response.status_code, 200)
