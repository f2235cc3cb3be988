# coding: utf-8

# # Message size against bottleneck capacity
#
# Doubling |M| at a fixed depth k doubles the share of bottleneck channels
# the message must occupy. This demo trains both settings under the same
# step budget and compares bit error on held-out crops.

# In[1]:

from mshidden.bench import SweepSpec, sweep, sweep_to_text
from mshidden.data import Dataset, synthetic_images
from mshidden.models import ModelConfig, feature_capacity

for k, m in [(4, 64), (3, 16), (4, 128), (5, 128)]:
    print(feature_capacity(k, m))


# Three seeds per setting, 200 Adam steps each. Expect a couple of minutes.

# In[2]:

data = Dataset.from_arrays(synthetic_images(160, 48, seed=5), ModelConfig(block=32, k=3, msg_bits=16))
spec = SweepSpec([(32, 3, 16), (32, 3, 32)], budget_steps=200, seeds=[0, 1, 2])
result = sweep(spec, dataset=data)
print(sweep_to_text(result))


# The same comparison from the command line:
#
#     mshidden sweep --data DIR --spec "32,3,16;32,3,32" --budget-steps 200 --seeds 0,1,2 --report sweep.json
