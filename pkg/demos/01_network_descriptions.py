# %% [markdown]
# # Describing generators in one line
#
# A generator is written as ``N=<depth>; S={skips}; C={cascades}; R=[residuals]``.
# The parser turns that into a ``NetworkSpec``, the validator lists every
# broken rule, and ``build_generator`` wires an encoder-decoder from it.

# %%
import torch

from internal_learning.net_dsl import (
    DSR_SPEC_TEXT,
    RETARGET_SPEC_TEXT,
    GeneratorConfig,
    InvalidSpec,
    build_generator,
    generator_forward,
    parse_network_spec,
    validate_spec,
)

spec = parse_network_spec(DSR_SPEC_TEXT)
print(spec)
print(spec.to_text())

# %% [markdown]
# The same ten-layer body with six residual blocks at the bottleneck is what
# retargeting uses.

# %%
for text in (DSR_SPEC_TEXT, RETARGET_SPEC_TEXT):
    net = build_generator(GeneratorConfig(parse_network_spec(text), base_channels=16))
    print(net.summary(), "\n")

# %% [markdown]
# Broken descriptions are reported rule by rule rather than failing on the first.

# %%
bad = parse_network_spec("N=10; S={(8,2),(3,3)}; C={}; R=[(9,4)]")
for v in validate_spec(bad):
    print(v)
try:
    build_generator(GeneratorConfig(bad))
except InvalidSpec as exc:
    print("build refused:", exc)

# %% [markdown]
# Output size is ``round(s*h)`` per axis, so one network serves any scale.

# %%
x = torch.rand(1, 3, 24, 20)
with torch.no_grad():
    for s in [(0.5, 0.5), (1, 1.5), (2, 2)]:
        print(s, tuple(generator_forward(net, x, *s).shape))
