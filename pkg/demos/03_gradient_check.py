# coding: utf-8

# # Checking gradients of the full objective
#
# The tape computes gradients of the weighted training loss with respect to
# every network weight. Here they are compared with central differences on a
# tiny 8x8 model.

# In[1]:

import numpy as np

from mshidden.engine import Tensor, ops, param_grad_check
from mshidden.models import ModelConfig, StegoModel, total_loss

cfg = ModelConfig(block=8, k=2, msg_bits=4, seed=0)
model = StegoModel(cfg)
rng = np.random.default_rng(0)
cover = rng.random((2, 3, 8, 8))
msg = rng.integers(0, 2, (2, 4)).astype(float)


def objective():
    c, m = Tensor(cover), Tensor(msg)
    stego = model.embedder(c, m)
    return total_loss(cfg, c, stego, m, model.extractor(stego), model.discriminator(stego)).total


# Every embedder weight, then a random sample of the other two networks.

# In[2]:

print("embedder   ", param_grad_check(objective, model.embedder.params.tensors()))
others = model.extractor.params.tensors() + model.discriminator.params.tensors()
print("other nets ", param_grad_check(objective, others, samples=20))


# The discriminator is trained on its own loss with the stego detached.

# In[3]:

def disc_loss():
    c = Tensor(cover)
    stego = model.embedder(c, Tensor(msg)).detach()
    return ops.adversarial_losses(model.discriminator(c), model.discriminator(stego))[0]


print("discriminator", param_grad_check(disc_loss, model.discriminator.params.tensors()))
