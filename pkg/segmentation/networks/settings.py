from django.utils.translation import gettext_lazy as _

BACKBONE_CHOICES = [
    ('reference', _('Reference convolutional backbone')),
    ('resnet50', _('Dilated ResNet-50 with ASPP decoder')),
    ('resnet101', _('Dilated ResNet-101 with ASPP decoder')),
]

# Archive layout version of save_checkpoint; bump on incompatible changes.
CHECKPOINT_SCHEMA = 1

PARAMETER_GROUPS = ['backbone', 'projector', 'classifier', 'aux_classifiers']

# group count of the normalisation in the ASPP image-pooling branch
ASPP_POOL_GROUPS = 32
