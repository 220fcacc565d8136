import logging

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand
from django.core.management.base import CommandError
from django.utils.translation import gettext_lazy as _

from segmentation.datasets.corpus import load_corpus
from segmentation.datasets.corpus import read_manifest
from ..config import load_config
from ..config import resolve_run_dir
from ..config import write_config


logger = logging.getLogger(__name__)


def format_error(e):
    if isinstance(e, ValidationError):
        return "; ".join(e.messages)
    return str(e)


class ExperimentCommand(BaseCommand):
    """Commands implement ``run``; domain errors become a CommandError (exit status 1)."""

    def add_config_arguments(self, parser):
        parser.add_argument('config', nargs='?', help="YAML run configuration")
        parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                            help="Override a config value, e.g. --set train.epochs=30")
        parser.add_argument('--corpus', help="Corpus directory (data.root)")
        parser.add_argument('--run-dir', help="Run directory (run.dir)")

    def load_config(self, options):
        config = load_config(options.get('config'), options.get('overrides'))
        if options.get('corpus'):
            config['data']['root'] = options['corpus']
        return config

    def prepare_run(self, config, run_dir=None):
        run_dir = resolve_run_dir(config, run_dir)
        write_config(config, run_dir)
        return run_dir

    def load_corpus(self, config):
        data = config['data']
        if not data.get('root'):
            raise ValidationError(_("data.root is not set; pass --corpus or --set data.root=PATH"))
        manifest = read_manifest(data['root'], data['manifest'])
        samples = load_corpus(data['root'], data['manifest'], ignore_classes=data['ignore_classes'])
        if not samples:
            raise ValidationError(_("Corpus %(root)s is empty"), params={'root': data['root']})
        if not config['model'].get('num_classes'):
            config['model']['num_classes'] = manifest.classes
        return samples, manifest

    def run(self, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except (ValidationError, ValueError, KeyError, FloatingPointError, OSError) as e:
            logger.debug("Command failed", exc_info=True)
            raise CommandError(format_error(e))
