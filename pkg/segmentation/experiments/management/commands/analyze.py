import os

from segmentation.analysis.density import feature_density_map
from segmentation.analysis.density import image_density_map
from segmentation.analysis.density import save_density_map
from segmentation.analysis.embeddings import export_embeddings
from segmentation.analysis.settings import FEATURE_SOURCE_CHOICES
from segmentation.datasets.corpus import load_corpus
from segmentation.datasets.corpus import read_manifest
from segmentation.experiments.settings import ANALYSIS_MODE_CHOICES
from segmentation.experiments.settings import DENSITY_SPACE_CHOICES
from ..base import ExperimentCommand
from .evaluate import model_from_checkpoint


class Command(ExperimentCommand):
    help = "Density maps of images or features, or an embedding export for external projection tools."

    def add_arguments(self, parser):
        parser.add_argument('mode', choices=[key for key, _label in ANALYSIS_MODE_CHOICES])
        parser.add_argument('--checkpoint', help="Required for embed and for feature-space density")
        parser.add_argument('--corpus', required=True)
        parser.add_argument('--manifest', default='manifest.yaml')
        parser.add_argument('--out', required=True, help="Output directory")
        parser.add_argument('--space', choices=[key for key, _label in DENSITY_SPACE_CHOICES], default='feature')
        parser.add_argument('--feature-source', choices=[key for key, _label in FEATURE_SOURCE_CHOICES],
                            help="Network output to analyse; replaces analysis.feature_source")
        parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                            help="Override an analysis.* value")
        parser.add_argument('--limit', type=int, help="Only the first N images")

    def run(self, **options):
        config = self.load_config(options)
        analysis = config['analysis']
        source = options.get('feature_source') or analysis['feature_source']
        manifest = read_manifest(options['corpus'], options['manifest'])
        samples = load_corpus(options['corpus'], options['manifest'])
        if options.get('limit'):
            samples = samples[:options['limit']]
        needs_model = options['mode'] == 'embed' or options['space'] == 'feature'
        if needs_model and not options.get('checkpoint'):
            raise ValueError(f"{options['mode']} in {options['space']} space needs --checkpoint")
        model = model_from_checkpoint(options['checkpoint'])[0] if needs_model else None
        os.makedirs(options['out'], exist_ok=True)

        if options['mode'] == 'embed':
            path = os.path.join(options['out'], 'embeddings.csv')
            coords = export_embeddings(model, samples, path, subsample=int(analysis['subsample']),
                                       seed=int(analysis['seed']), ignore_index=manifest.ignore_index,
                                       source=source)
            self.stdout.write(f"{len(coords)} embeddings written to {path}")
            return

        suffix = 'image' if options['space'] == 'image' else f"feature_{source}"
        for sample in samples:
            kwargs = {'patch': int(analysis['patch']), 'neighbor_offset': analysis['neighbor_offset']}
            if options['space'] == 'image':
                density = image_density_map(sample.image, **kwargs)
            else:
                density = feature_density_map(model, sample.image, source=source, **kwargs)
            save_density_map(density, os.path.join(options['out'], f"{sample.source_id}_{suffix}"),
                             title=sample.source_id)
        self.stdout.write(f"{len(samples)} density maps written to {options['out']}")
