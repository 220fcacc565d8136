import os
import tempfile

import torch
import torch.nn.functional as F
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from common.base.utils import make_generator
from segmentation.perturbations.ops import PerturbConfig
from .backbones import build_backbone
from .bundle import build_model
from .checkpoints import load_checkpoint
from .checkpoints import save_checkpoint


def tiny_model(num_classes=5, width=16, K=4, dtype=torch.float32):
    torch.manual_seed(0)
    return build_model(num_classes, width=width, projection_dim=8, K=K).to(dtype)


class ExtractFeaturesTests(SimpleTestCase):
    def test_shape_contract(self):
        model = build_model(5).eval()
        with torch.no_grad():
            f = model.extract_features(torch.rand(1, 3, 320, 320))
        self.assertEqual(tuple(f.values.shape), (1, 256, 40, 40))
        self.assertEqual(f.stride, 8)
        self.assertEqual(f.input_size, (320, 320))

    def test_odd_sizes_round_up(self):
        model = tiny_model().eval()
        with torch.no_grad():
            f = model.extract_features(torch.rand(1, 3, 33, 41))
        self.assertEqual(tuple(f.values.shape[-2:]), (5, 6))

    def test_eval_mode_is_deterministic(self):
        model = tiny_model().eval()
        x = torch.rand(1, 3, 32, 32)
        with torch.no_grad():
            self.assertTrue(torch.equal(model.extract_features(x).values, model.extract_features(x).values))

    def test_batched_equals_per_item(self):
        model = tiny_model().eval()
        x = torch.rand(3, 3, 32, 32)
        with torch.no_grad():
            batched = model.extract_features(x).values
            looped = torch.cat([model.extract_features(x[i:i + 1]).values for i in range(3)])
        self.assertTrue(torch.allclose(batched, looped, atol=1e-5))

    def test_bad_input_shape(self):
        with self.assertRaises(ValueError):
            tiny_model().extract_features(torch.rand(1, 1, 32, 32))


class HeadTests(SimpleTestCase):
    def setUp(self):
        self.model = tiny_model().eval()
        with torch.no_grad():
            self.f = self.model.extract_features(torch.rand(2, 3, 32, 32))

    def test_projection_shape(self):
        model = build_model(5).eval()
        with torch.no_grad():
            f = model.extract_features(torch.rand(1, 3, 320, 320))
            phi = model.project(f)
        self.assertEqual(tuple(phi.values.shape), (1, 128, 40, 40))

    def test_zero_projector_gives_zero_projections(self):
        for parameter in self.model.projector.parameters():
            torch.nn.init.zeros_(parameter)
        with torch.no_grad():
            self.assertTrue(bool((self.model.project(self.f).values == 0).all()))

    def test_projection_is_pixel_wise(self):
        values = self.f.values
        permutation = torch.randperm(values.shape[-1])
        with torch.no_grad():
            direct = self.model.project(self.f).values[..., permutation]
            permuted = self.model.project(self.f.with_values(values[..., permutation])).values
        self.assertTrue(torch.allclose(direct, permuted, atol=1e-6))

    def test_classify_shapes_and_normalisation(self):
        with torch.no_grad():
            low = self.model.classify(self.f)
            high = self.model.classify(self.f, upsample=True)
        self.assertEqual(tuple(low.probs.shape), (2, 5, 4, 4))
        self.assertEqual(tuple(high.probs.shape), (2, 5, 32, 32))
        self.assertFalse(low.upsampled)
        self.assertTrue(high.upsampled)
        self.assertTrue(torch.allclose(low.probs.sum(dim=1), torch.ones(2, 4, 4), atol=1e-5))
        self.assertTrue(bool((high.probs >= 0).all()))

    def test_constant_features_give_constant_probs(self):
        constant = self.f.with_values(torch.ones(1, 16, 4, 4))
        with torch.no_grad():
            probs = self.model.classify(constant).probs
        self.assertTrue(torch.allclose(probs, probs[..., :1, :1].expand_as(probs)))

    def test_twelve_distinct_auxiliary_heads(self):
        heads = [head for heads in self.model.aux_classifiers.values() for head in heads]
        self.assertEqual(len(heads), 12)
        self.assertEqual(len({id(head.weight) for head in heads}), 12)
        self.assertFalse(any(head.weight is self.model.classifier.weight for head in heads))

    def test_copied_auxiliary_head_matches_main_classifier(self):
        head = self.model.aux_classifiers['noise'][0]
        head.load_state_dict(self.model.classifier.state_dict())
        with torch.no_grad():
            self.assertTrue(torch.equal(self.model.aux_classify(self.f, 1, 'noise').probs,
                                        self.model.classify(self.f).probs))
            self.assertFalse(torch.allclose(self.model.aux_classify(self.f, 2, 'noise').probs,
                                            self.model.aux_classify(self.f, 1, 'dropout').probs))

    def test_unknown_auxiliary_head(self):
        for k, kind in [(0, 'noise'), (5, 'noise'), (1, 'blur')]:
            with self.subTest(k=k, kind=kind), self.assertRaises(KeyError):
                self.model.aux_classify(self.f, k, kind)

    def test_perturbed_predictions_per_head(self):
        with torch.no_grad():
            predictions = self.model.perturbed_predictions(self.f, PerturbConfig(), make_generator(0))
        self.assertEqual(len(predictions), 12)
        self.assertTrue(all(tuple(p.probs.shape) == (2, 5, 4, 4) for p in predictions))

    def test_encoder_target_decodes_the_perturbed_latent(self):
        x = torch.rand(1, 3, 32, 32)
        config = PerturbConfig(target='encoder', K=1)
        with torch.no_grad():
            latent = self.model.encode(x)
            f = self.model.decode(latent, x.shape[-2:])
            predictions = self.model.perturbed_predictions(f, config, make_generator(0), latent=latent)
            with self.assertRaises(ValueError):
                self.model.perturbed_predictions(f, config, make_generator(0))
        self.assertEqual(len(predictions), 3)


class GradientTests(SimpleTestCase):
    def test_cross_entropy_gradient_matches_finite_differences(self):
        model = build_model(3, width=4, projection_dim=4, K=1,
                            perturbation_types=['noise']).to(torch.float64).eval()
        x = torch.rand(1, 3, 16, 16, dtype=torch.float64)
        target = torch.randint(0, 3, (1, 16, 16))
        weight = model.classifier.weight

        def loss_of(w):
            logits = F.conv2d(model.extract_features(x).values, w, model.classifier.bias)
            logits = F.interpolate(logits, size=(16, 16), mode='bilinear', align_corners=False)
            return F.cross_entropy(logits, target)

        self.assertTrue(torch.autograd.gradcheck(loss_of, (weight.detach().clone().requires_grad_(),),
                                                 rtol=1e-3))

    def test_projector_gradient_reaches_backbone(self):
        model = tiny_model()
        model.project(model.extract_features(torch.rand(2, 3, 32, 32))).values.pow(2).mean().backward()
        gradients = [p.grad for p in model.backbone.parameters() if p.grad is not None]
        self.assertTrue(gradients)
        self.assertTrue(any(bool(g.abs().sum() > 0) for g in gradients))


class BackboneTests(SimpleTestCase):
    def test_unknown_backbone(self):
        with self.assertRaises(ValidationError):
            build_backbone('vgg16')

    def test_reference_stride_must_be_power_of_two(self):
        with self.assertRaises(ValidationError):
            build_backbone('reference', stride=6)

    def test_resnet_is_dilated_to_stride_eight(self):
        backbone = build_backbone('resnet50', width=32).eval()
        with torch.no_grad():
            out = backbone(torch.rand(1, 3, 64, 64))
        self.assertEqual(tuple(out.shape), (1, 32, 8, 8))

    def test_resnet_trains_on_a_single_image(self):
        backbone = build_backbone('resnet50', width=32).train()
        out = backbone(torch.rand(1, 3, 64, 64))
        out.mean().backward()
        pooling_norm = backbone.decoder.convs[-1][2]
        self.assertIsInstance(pooling_norm, torch.nn.GroupNorm)
        self.assertEqual(pooling_norm.num_groups, 16)
        self.assertEqual(tuple(out.shape), (1, 32, 8, 8))


class CheckpointTests(SimpleTestCase):
    def test_round_trip_restores_every_parameter_group(self):
        model = tiny_model()
        optimizer = torch.optim.SGD(model.parameters(), lr=0.1, momentum=0.9)
        with tempfile.TemporaryDirectory() as root:
            path = save_checkpoint(os.path.join(root, 'checkpoints', 'last.pt'), model, optimizer,
                                   epoch=3, config={'model': {'width': 16}})
            restored = build_model(5, width=16, projection_dim=8)
            archive = load_checkpoint(path, restored)
        self.assertEqual(archive['epoch'], 3)
        self.assertEqual(archive['config']['model']['width'], 16)
        for (name, a), (_name, b) in zip(model.state_dict().items(), restored.state_dict().items()):
            self.assertTrue(torch.equal(a, b), name)

    def test_schema_mismatch(self):
        with tempfile.TemporaryDirectory() as root:
            path = os.path.join(root, 'old.pt')
            torch.save({'schema': 0, 'model': {}}, path)
            with self.assertRaises(ValidationError):
                load_checkpoint(path, tiny_model())

    def test_missing_file(self):
        with self.assertRaises(ValidationError):
            load_checkpoint('/nonexistent/model.pt', tiny_model())
