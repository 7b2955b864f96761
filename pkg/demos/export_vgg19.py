"""Export the first three conv blocks of torchvision's ImageNet VGG19 as a feature archive.

    python3 demos/export_vgg19.py weights/vgg19_blocks1-3.bin

Needs ``torchvision`` and network access for the one-time weight download.
The archive is then usable as ``--features pretrained:<path>``.
"""
import sys
from pathlib import Path

from torchvision.models import VGG19_Weights, vgg19

from internal_learning.features import archive_from_vgg, load_pretrained_extractor

out = Path(sys.argv[1] if len(sys.argv) > 1 else "weights/vgg19_blocks1-3.bin")
out.parent.mkdir(parents=True, exist_ok=True)
net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
archive_from_vgg(net.features, out, max_block=3)
ext = load_pretrained_extractor(out)
print(f"wrote {out}: layers {', '.join(ext.layer_names)}")
