"""
Knowledge-transfer losses
=========================

The student is pushed to reproduce the teacher's parameters and the
teacher's neighbourhood structure within a batch. Neighbourhoods are
cosine-kernel conditional probabilities; the structural loss is their
summed KL divergence.
"""

# %%
import numpy as np

from facekit import ParamVector
from facekit.distill import conditional_probabilities, divergence_grad, divergence_loss, kd_loss

rng = np.random.default_rng(0)
teacher = rng.standard_normal((8, 32))

# %%
# Every column of the conditional matrix is a distribution over the other rows.
p = conditional_probabilities(teacher)
print("column sums:", p.sum(axis=0).round(12))

# %%
# A student that matches the teacher's geometry up to per-row scale has zero
# divergence; a random student does not.
print("rescaled student:", divergence_loss(teacher, teacher * rng.uniform(0.5, 2, (8, 1))))
student = rng.standard_normal((8, 16))
print("random student:  ", divergence_loss(teacher, student))

# %%
# Plain gradient descent on the divergence alone pulls the student's
# neighbourhoods towards the teacher's.
s = student.copy()
for step in range(201):
    if step % 50 == 0:
        print(f"step {step:3d}  divergence {divergence_loss(teacher, s):.5f}")
    s -= 0.5 * divergence_grad(teacher, s)

# %%
# The full loss adds the squared parameter error to the teacher's pseudo
# ground truth.
t_par = ParamVector(rng.standard_normal(40), rng.standard_normal(10))
s_par = ParamVector(t_par.shape + 0.1, t_par.expr)
total, _, _ = kd_loss(teacher, s, t_par, s_par)
print(f"total KD loss {total:.4f}")
