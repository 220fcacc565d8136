from segmentation.experiments.ablation import ablation_variants
from segmentation.experiments.ablation import format_ablation
from segmentation.experiments.ablation import parse_list
from segmentation.experiments.ablation import run_ablation
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Sweep bank negatives, auxiliary classifiers per perturbation or loss schemes; one table row per setting."

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--negatives', help="Comma separated bank negative counts, e.g. 100,500,1200")
        parser.add_argument('--aux-classifiers', help="Comma separated K values, e.g. 1,2,4")
        parser.add_argument('--schemes', help="Comma separated schemes, e.g. supervised,scheme1,scheme2,scheme3")

    def run(self, **options):
        variants = ablation_variants(
            negatives=parse_list(options.get('negatives'), int),
            aux_classifiers=parse_list(options.get('aux_classifiers'), int),
            schemes=parse_list(options.get('schemes')),
        )
        config = self.load_config(options)
        samples, manifest = self.load_corpus(config)
        run_dir = self.prepare_run(config, options.get('run_dir'))
        dataset = run_ablation(config, samples, run_dir, variants, class_names=manifest.class_names,
                               ignore_index=manifest.ignore_index)
        self.stdout.write(format_ablation(dataset))
