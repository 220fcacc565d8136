import contextlib
import io
import json
import os
import shutil
import tempfile

import numpy as np
import yaml
from django.conf import settings
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from PIL import Image
from scipy import ndimage
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score

from common.testing import slow
from segmentation.datasets.corpus import load_corpus
from segmentation.training.experiment import partition_corpus
from .ablation import ablation_variants
from .cli import cli
from .config import apply_overrides
from .config import load_config
from .config import valid_keys
from .config import write_config
from .settings import DEFAULT_CRCFP_CONFIG
from .settings import get_default_config
from .settings import merge_config
from .toy import gen_toy_corpus


TINY_OVERRIDES = [
    'data.input_size=32', 'data.split_mode=by_image', 'data.fraction=1/2',
    'model.width=8', 'model.projection_dim=8', 'perturb.K=1', 'bank.negatives=20',
    'train.epochs=1', 'train.warmup_epochs=0', 'train.steps_per_epoch=1', 'train.seeds=[0]',
    'train.batch_size=2', 'train.unlabeled_batch_size=2', 'eval.batch_size=4',
]


def config_path(name):
    return os.path.join(settings.BASE_DIR, 'configs', name)


def run_cli(*args):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        status = cli(['manage.py', *args])
    return status, out.getvalue(), err.getvalue()


def with_sets(overrides):
    args = []
    for item in overrides:
        args += ['--set', item]
    return args


class ConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = get_default_config()
        self.assertEqual(config['contrastive']['threshold'], 0.75)
        self.assertEqual(config['contrastive']['temperature'], 0.1)
        self.assertEqual(config['perturb']['K'], 4)
        self.assertEqual(config['perturb']['noise'], [-0.3, 0.3])
        self.assertEqual(config['perturb']['feature_dropout'], [0.75, 0.9])
        self.assertEqual(config['perturb']['dropout'], 0.5)
        self.assertEqual([config['loss'][key] for key in ('w_sup', 'w_cont', 'w_cross', 'w_ent')],
                         [1.0, 0.1, 0.01, 0.01])
        train = config['train']
        self.assertEqual((train['base_lr'], train['lr_power'], train['batch_size'], train['epochs'],
                          train['warmup_epochs']), (0.001, 0.9, 8, 80, 5))
        self.assertEqual(config['data']['input_size'], 320)
        self.assertEqual(config['bank']['negatives'], 1200)

    def test_overrides_are_yaml_scalars(self):
        config = apply_overrides(get_default_config(), [
            'train.epochs=30', 'train.seeds=[4, 5]', 'model.weights_path=null', 'data.fraction=1/4'])
        self.assertEqual(config['train']['epochs'], 30)
        self.assertEqual(config['train']['seeds'], [4, 5])
        self.assertIsNone(config['model']['weights_path'])
        self.assertEqual(config['data']['fraction'], '1/4')

    def test_unknown_key_lists_valid_keys(self):
        with self.assertRaises(ValidationError) as raised:
            apply_overrides(get_default_config(), ['train.epoch=3'])
        message = raised.exception.messages[0]
        self.assertIn('train.epoch', message)
        self.assertIn('train.epochs', message)
        self.assertIn('contrastive.threshold', message)
        with self.assertRaises(ValidationError):
            apply_overrides(get_default_config(), ['train=3'])
        with self.assertRaises(ValidationError):
            apply_overrides(get_default_config(), ['train.epochs'])

    def test_file_keys_are_checked(self):
        with tempfile.TemporaryDirectory() as root:
            path = os.path.join(root, 'run.yaml')
            with open(path, 'w') as handle:
                yaml.safe_dump({'train': {'epochs': 3}, 'loss': {'w_cont': 0.0}}, handle)
            config = load_config(path, ['train.epochs=4'])
            self.assertEqual(config['train']['epochs'], 4)
            self.assertEqual(config['loss']['w_cont'], 0.0)
            self.assertEqual(config['loss']['w_sup'], 1.0)
            with open(path, 'w') as handle:
                yaml.safe_dump({'trian': {'epochs': 3}}, handle)
            with self.assertRaises(ValidationError):
                load_config(path)
        with self.assertRaises(ValidationError):
            load_config('/nonexistent/run.yaml')

    def test_shipped_configs_load(self):
        for name in ('crcfp.yaml', 'toy.yaml'):
            config = load_config(config_path(name))
            self.assertEqual(set(valid_keys(config)), set(valid_keys(DEFAULT_CRCFP_CONFIG)))
        self.assertEqual(load_config(config_path('crcfp.yaml')), merge_config(DEFAULT_CRCFP_CONFIG, {}))

    def test_echo_round_trip(self):
        config = get_default_config()
        with tempfile.TemporaryDirectory() as root:
            with open(write_config(config, root)) as handle:
                self.assertEqual(yaml.safe_load(handle), config)

    def test_ablation_variants(self):
        variants = ablation_variants(negatives=[100, 500, 1200])
        self.assertEqual([name for name, _overrides in variants], ['negatives_100', 'negatives_500', 'negatives_1200'])
        with self.assertRaises(ValidationError):
            ablation_variants()
        with self.assertRaises(ValidationError):
            ablation_variants(schemes=['scheme7'])


class ToyCorpusTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.root = tempfile.mkdtemp()
        gen_toy_corpus(cls.root, n_images=200, size=96, n_classes=4, seed=0)
        cls.samples = load_corpus(cls.root)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.root)
        super().tearDownClass()

    def test_counts(self):
        self.assertEqual(len(self.samples), 200)
        self.assertEqual(len(os.listdir(os.path.join(self.root, 'images'))), 200)
        self.assertEqual(len(os.listdir(os.path.join(self.root, 'masks'))), 200)
        self.assertEqual(sum(sample.split == 'test' for sample in self.samples), 50)
        self.assertEqual(len({sample.center_id for sample in self.samples}), 8)

    def test_masks_hold_exactly_the_declared_classes(self):
        values = set()
        for sample in self.samples:
            values |= set(sample.mask.unique().tolist())
        self.assertEqual(values, {0, 1, 2, 3})

    def test_context_class_only_inside_hosts(self):
        for sample in self.samples[:20]:
            mask = sample.mask.numpy()
            context = mask == 3
            ring = ndimage.binary_dilation(context) & ~context
            self.assertTrue(context.any())
            self.assertTrue(np.all(mask[ring] == 2))

    def test_centers_are_linearly_separable(self):
        colours = np.stack([sample.image.mean(dim=(1, 2)).numpy() for sample in self.samples])
        centers = np.asarray([int(sample.center_id.split('_')[1]) for sample in self.samples])
        classifier = LogisticRegression(max_iter=2000).fit(colours, centers)
        self.assertGreater(roc_auc_score(centers, classifier.predict_proba(colours), multi_class='ovr'), 0.9)

    def test_same_seed_same_corpus(self):
        with tempfile.TemporaryDirectory() as root:
            gen_toy_corpus(root, n_images=3, size=32, n_classes=3, seed=5)
            first = np.asarray(Image.open(os.path.join(root, 'images', 'toy_0002.png')))
            gen_toy_corpus(root, n_images=3, size=32, n_classes=3, seed=5)
            second = np.asarray(Image.open(os.path.join(root, 'images', 'toy_0002.png')))
        self.assertTrue(np.array_equal(first, second))

    def test_toy_config_labels_one_center(self):
        labeled, unlabeled, test = partition_corpus(load_config(config_path('toy.yaml')), self.samples)
        self.assertEqual(len({sample.center_id for sample in labeled}), 1)
        self.assertTrue(unlabeled)
        self.assertEqual(len(test), 50)

    def test_toy_config_splits_a_small_corpus(self):
        with tempfile.TemporaryDirectory() as root:
            gen_toy_corpus(root, n_images=20, size=32, n_classes=4, seed=0)
            labeled, unlabeled, _test = partition_corpus(load_config(config_path('toy.yaml')), load_corpus(root))
        self.assertTrue(labeled)
        self.assertTrue(all(sample.is_labeled for sample in labeled))
        self.assertTrue(unlabeled)


class CliTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.root = tempfile.mkdtemp()
        cls.corpus = os.path.join(cls.root, 'corpus')
        status, _out, err = run_cli('gen_toy', cls.corpus, '--n-images', '10', '--size', '32', '--centers', '2')
        assert status == 0, err

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.root)
        super().tearDownClass()

    def test_help_exits_zero(self):
        for command in ('train', 'evaluate', 'analyze', 'gen_toy', 'ablate'):
            status, out, _err = run_cli(command, '--help')
            self.assertEqual(status, 0)
            self.assertIn('usage', out)

    def test_invalid_key_fails(self):
        status, _out, err = run_cli('train', '--corpus', self.corpus, '--set', 'train.epoch=3')
        self.assertNotEqual(status, 0)
        self.assertIn('train.epochs', err)

    def test_missing_corpus_fails(self):
        status, _out, err = run_cli('train', '--run-dir', os.path.join(self.root, 'nothing'))
        self.assertNotEqual(status, 0)
        self.assertIn('data.root', err)

    def test_toy_config_trains(self):
        run_dir = os.path.join(self.root, 'toy')
        overrides = [item for item in TINY_OVERRIDES if not item.startswith(('data.split_mode', 'data.fraction'))]
        status, out, err = run_cli('train', config_path('toy.yaml'), '--corpus', self.corpus, '--run-dir', run_dir,
                                   *with_sets(overrides))
        self.assertEqual(status, 0, err)
        self.assertIn('mIoU', out)
        self.assertTrue(os.path.exists(os.path.join(run_dir, 'seed_0', 'checkpoints', 'last.pt')))

    def test_manifest_ignore_index_is_used_by_train(self):
        corpus = os.path.join(self.root, 'ignore_nine')
        gen_toy_corpus(corpus, n_images=10, size=32, n_classes=4, seed=1, n_centers=2)
        manifest_path = os.path.join(corpus, 'manifest.yaml')
        with open(manifest_path) as handle:
            manifest = yaml.safe_load(handle)
        manifest['ignore_index'] = 9
        with open(manifest_path, 'w') as handle:
            yaml.safe_dump(manifest, handle, sort_keys=False)
        for entry in manifest['entries']:
            path = os.path.join(corpus, entry['mask_path'])
            mask = np.asarray(Image.open(path)).copy()
            mask[:4] = 9
            Image.fromarray(mask).save(path)

        run_dir = os.path.join(self.root, 'ignore_nine_run')
        status, _out, err = run_cli('train', '--corpus', corpus, '--run-dir', run_dir, *with_sets(TINY_OVERRIDES))
        self.assertEqual(status, 0, err)
        with open(os.path.join(run_dir, 'seed_0', 'reports', 'metrics.json')) as handle:
            result = json.load(handle)
        self.assertEqual(result['ignored'], 2 * 4 * 32)

    def test_supervised_only_run_then_evaluate_and_analyze(self):
        run_dir = os.path.join(self.root, 'sup')
        overrides = TINY_OVERRIDES + ['loss.w_cont=0', 'loss.w_cross=0', 'loss.w_ent=0']
        status, out, err = run_cli('train', '--corpus', self.corpus, '--run-dir', run_dir, *with_sets(overrides))
        self.assertEqual(status, 0, err)
        self.assertIn('mIoU', out)
        self.assertTrue(os.path.exists(os.path.join(run_dir, 'config.yaml')))
        self.assertTrue(os.path.exists(os.path.join(run_dir, 'reports', 'summary.csv')))
        with open(os.path.join(run_dir, 'seed_0', 'metrics.log')) as handle:
            records = [json.loads(line) for line in handle]
        self.assertTrue(records)
        self.assertTrue(all(record['l_cont'] == record['l_cross'] == record['l_ent'] == 0.0 for record in records))

        checkpoint = os.path.join(run_dir, 'seed_0', 'checkpoints', 'last.pt')
        status, out, err = run_cli('evaluate', checkpoint)
        self.assertEqual(status, 0, err)
        self.assertIn('accuracy', out)
        self.assertTrue(os.path.exists(os.path.join(run_dir, 'seed_0', 'checkpoints', 'reports', 'eval_test.csv')))

        out_dir = os.path.join(self.root, 'analysis')
        status, _out, err = run_cli('analyze', 'embed', '--checkpoint', checkpoint, '--corpus', self.corpus,
                                    '--out', out_dir, '--limit', '2', '--set', 'analysis.subsample=10')
        self.assertEqual(status, 0, err)
        with open(os.path.join(out_dir, 'embeddings.csv')) as handle:
            self.assertEqual(len(handle.read().strip().splitlines()), 21)
        status, _out, err = run_cli('analyze', 'density', '--space', 'image', '--corpus', self.corpus,
                                    '--out', out_dir, '--limit', '1', '--set', 'analysis.patch=5')
        self.assertEqual(status, 0, err)
        self.assertTrue(os.path.exists(os.path.join(out_dir, 'toy_0000_image.png')))

    def test_feature_density_needs_a_checkpoint(self):
        status, _out, err = run_cli('analyze', 'density', '--corpus', self.corpus, '--out', self.root)
        self.assertNotEqual(status, 0)
        self.assertIn('--checkpoint', err)

    def test_ablate_negatives(self):
        run_dir = os.path.join(self.root, 'ablate')
        status, out, err = run_cli('ablate', '--corpus', self.corpus, '--run-dir', run_dir,
                                   '--negatives', '100,500,1200', *with_sets(TINY_OVERRIDES))
        self.assertEqual(status, 0, err)
        with open(os.path.join(run_dir, 'reports', 'ablation.csv')) as handle:
            lines = handle.read().strip().splitlines()
        self.assertEqual(len(lines), 4)
        self.assertIn('negatives_1200', out)


class ToyEndToEndTests(SimpleTestCase):
    @slow
    def test_full_method_beats_supervised_baseline(self):
        from segmentation.training.experiment import run_experiment

        config = load_config(config_path('toy.yaml'))
        with tempfile.TemporaryDirectory() as root:
            gen_toy_corpus(os.path.join(root, 'corpus'), n_images=200, size=96, n_classes=4, seed=0)
            samples = load_corpus(os.path.join(root, 'corpus'))
            config['model']['num_classes'] = 4
            medians = {}
            for scheme in ('supervised', 'scheme1', 'scheme2', 'scheme3'):
                scheme_config = merge_config(config, {'loss': {'scheme': scheme}})
                report = run_experiment(scheme_config, samples, os.path.join(root, scheme))
                medians[scheme] = float(np.median([row['miou'] for row in report.rows]))
        self.assertGreaterEqual(medians['scheme3'] - medians['supervised'], 0.02)
        order = ['supervised', 'scheme1', 'scheme2', 'scheme3']
        for previous, current in zip(order, order[1:]):
            self.assertGreaterEqual(medians[current], medians[previous] - 0.005)
