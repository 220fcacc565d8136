from segmentation.training.experiment import run_experiment
from segmentation.training.settings import SCHEME_CHOICES
from ..base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Train one model per seed on a corpus and report test metrics (mean ± std over seeds)."

    def add_arguments(self, parser):
        self.add_config_arguments(parser)
        parser.add_argument('--seed', type=int, action='append', dest='seeds',
                            help="Train with this seed only (repeatable); replaces train.seeds")
        parser.add_argument('--scheme', choices=[key for key, _label in SCHEME_CHOICES],
                            help="Loss scheme; supervised trains the labeled loss only")

    def run(self, **options):
        config = self.load_config(options)
        if options.get('seeds'):
            config['train']['seeds'] = options['seeds']
        if options.get('scheme'):
            config['loss']['scheme'] = options['scheme']
        samples, manifest = self.load_corpus(config)
        run_dir = self.prepare_run(config, options.get('run_dir'))
        report = run_experiment(config, samples, run_dir, class_names=manifest.class_names,
                                ignore_index=manifest.ignore_index)
        self.stdout.write(self.style.SUCCESS(
            f"mIoU {report.formatted('miou')}  Dice {report.formatted('mean_dice')}  "
            f"accuracy {report.formatted('accuracy')}  ({run_dir})"))
