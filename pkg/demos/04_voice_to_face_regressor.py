"""
Training the embedding-to-parameter decoders
============================================

Synthetic embeddings are a hidden linear function of normalized face
coefficients. Two linear heads trained with Adam recover that map, and the
decoded faces get closer to the truth in ARE terms.
"""

# %%
import numpy as np

from facekit import are, denormalize_params, synthesize
from facekit.regressor import DecoderWeights, TrainConfig, dataset_loss, forward, train
from facekit.synthetic import SyntheticConfig, gen_dataset, gen_landmark_spec, gen_model

model = gen_model(SyntheticConfig(seed=0))
spec = gen_landmark_spec(model)
data = gen_dataset(model, SyntheticConfig(seed=0, n_identities=1000))
print(len(data), "samples, embedding dim", data.embeddings.shape[1])

# %%
init = DecoderWeights.init(model.n_shape, model.n_expr, seed=0)
weights, history = train(data, TrainConfig(lr=1e-2, iters=2000, seed=0), init=init)
print(f"dataset loss: {dataset_loss(data, init):.3e} -> {dataset_loss(data, weights):.3e}")
print("batch loss every 400 iterations:", [f"{h:.1e}" for h in history[::400]])


# %%
# Decoded meshes for the first few identities.
def decoded_are(w, i):
    emb, params, _ = data.sample(i)
    truth = synthesize(model, denormalize_params(params, model.param_stats))
    pred = synthesize(model, denormalize_params(forward(emb, w), model.param_stats))
    return are(pred, truth, spec)["mean"]


for i in range(5):
    print(f"identity {i}: ARE untrained {decoded_are(init, i):.4f}  trained {decoded_are(weights, i):.2e}")

# %%
# With embedding noise the optimum is no longer exact.
noisy = gen_dataset(model, SyntheticConfig(seed=0, n_identities=1000, noise_sigma=0.05))
w_noisy, _ = train(noisy, TrainConfig(lr=1e-2, iters=2000, seed=0), init=init)
print(f"noisy data: final loss {dataset_loss(noisy, w_noisy):.3e}")
print("mean ARE on 5 identities:", np.mean([decoded_are(w_noisy, i) for i in range(5)]).round(5))
