from segmentation.experiments.toy import gen_toy_corpus
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Generate the synthetic toy corpus (textured blobs, a context class and per-center colour shifts)."

    def add_arguments(self, parser):
        parser.add_argument('out_dir')
        parser.add_argument('--n-images', type=int, default=200)
        parser.add_argument('--size', type=int, default=96)
        parser.add_argument('--classes', type=int, default=4)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--centers', type=int, default=8)
        parser.add_argument('--test-fraction', type=float, default=0.25)

    def run(self, **options):
        manifest = gen_toy_corpus(
            options['out_dir'], options['n_images'], options['size'], options['classes'], options['seed'],
            n_centers=options['centers'], test_fraction=options['test_fraction'])
        self.stdout.write(self.style.SUCCESS(f"Toy corpus written: {manifest}"))
