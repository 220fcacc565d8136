import os

from segmentation.datasets.corpus import load_corpus
from segmentation.datasets.corpus import read_manifest
from segmentation.datasets.corpus import train_test_partition
from segmentation.evaluation.evaluate import evaluate_model
from segmentation.evaluation.reports import format_report
from segmentation.evaluation.reports import write_report
from segmentation.evaluation.settings import ACCURACY_MODE_CHOICES
from segmentation.networks.bundle import build_model_from_config
from segmentation.networks.checkpoints import load_checkpoint
from segmentation.networks.checkpoints import read_checkpoint
from ..base import ExperimentCommand


def model_from_checkpoint(path):
    archive = read_checkpoint(path)
    model = build_model_from_config(archive['config'])
    load_checkpoint(path, model)
    return model, archive['config']


class Command(ExperimentCommand):
    help = "Evaluate a checkpoint on a corpus and write a metrics report."

    def add_arguments(self, parser):
        parser.add_argument('checkpoint', help="Checkpoint file written by train")
        parser.add_argument('--corpus', help="Corpus directory; defaults to the one the checkpoint was trained on")
        parser.add_argument('--split', choices=['test', 'train', 'all'], default='test')
        parser.add_argument('--tile-size', type=int)
        parser.add_argument('--accuracy-mode', choices=[key for key, _label in ACCURACY_MODE_CHOICES])
        parser.add_argument('--out', help="Report directory (default: next to the checkpoint)")

    def run(self, **options):
        model, config = model_from_checkpoint(options['checkpoint'])
        data = config['data']
        root = options.get('corpus') or data['root']
        manifest = read_manifest(root, data['manifest'])
        samples = load_corpus(root, data['manifest'], ignore_classes=data['ignore_classes'])
        train, test = train_test_partition(samples)
        samples = {'test': test, 'train': train, 'all': samples}[options['split']]

        result = evaluate_model(
            model, samples, model.num_classes,
            tile_size=options.get('tile_size') or config['eval'].get('tile_size') or data['input_size'],
            batch_size=int(config['eval']['batch_size']),
            accuracy_mode=options.get('accuracy_mode') or config['eval']['accuracy_mode'],
            ignore_index=manifest.ignore_index,
            progress=True,
        )
        out_dir = options.get('out') or os.path.join(os.path.dirname(os.path.abspath(options['checkpoint'])), 'reports')
        write_report(result, out_dir, name=f"eval_{options['split']}", class_names=manifest.class_names)
        self.stdout.write(format_report(result, manifest.class_names))
