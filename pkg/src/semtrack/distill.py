"""Dual-constraint distillation loss between student features and a frozen
teacher vector.

Pipeline: project the 1x1024 teacher vector to 256, align it to the student
sequence length by linear interpolation, L2-normalize both sides, form the
temperature-scaled attention map between them, aggregate the aligned teacher
through that map, then combine a local MSE term and a global L1-of-means term
with softmax-normalized learnable weights.

With a single teacher row the aligned teacher has identical rows and every
attention row sums to one, so the aggregated teacher equals the aligned
teacher exactly; the attention map is still computed and surfaced for
diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from semtrack import autodiff as ad
from semtrack.autodiff import DimensionError, Matrix, Parameter
from semtrack.teacher import TEACHER_DIM, TeacherEmbedding

STUDENT_DIM = 256
DEFAULT_TEMPERATURE = 2.0


@dataclass
class DcsdBreakdown:
    """Per-call loss components; values are plain floats, nodes kept for
    backprop and inspection."""

    l_local: float
    l_global: float
    w1: float
    w2: float
    l_distill: float
    loss_node: Matrix
    attention: np.ndarray


class DcsdHead:
    """Teacher projection + learnable loss-weight logits."""

    def __init__(self, seed: int = 0, temperature: float = DEFAULT_TEMPERATURE,
                 student_dim: int = STUDENT_DIM):
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.temperature = float(temperature)
        self.student_dim = student_dim
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(TEACHER_DIM)
        self.teacher_weight = Parameter(
            rng.uniform(-bound, bound, size=(TEACHER_DIM, student_dim)),
            name="dcsd.teacher_proj.weight")
        self.teacher_bias = Parameter(
            rng.uniform(-bound, bound, size=(1, student_dim)),
            name="dcsd.teacher_proj.bias")
        # logits start equal: w1 = w2 = 0.5
        self.loss_logits = Parameter(np.zeros((1, 2)), name="dcsd.loss_logits")

    def parameters(self) -> list[Parameter]:
        return [self.teacher_weight, self.teacher_bias, self.loss_logits]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.value.rows * p.value.cols for p in self.parameters() if p.trainable)

    def loss_weights(self) -> tuple[float, float]:
        """Softmax of the two logits: positive, summing to one."""
        w = ad.softmax_rows(self.loss_logits.value).data
        return float(w[0, 0]), float(w[0, 1])

    def project_teacher(self, t: TeacherEmbedding) -> Matrix:
        return ad.add_bias(ad.matmul(t.vector, self.teacher_weight.value),
                           self.teacher_bias.value)

    def loss(self, s: Matrix, t: TeacherEmbedding) -> DcsdBreakdown:
        if s.cols != self.student_dim:
            raise DimensionError(
                f"student features must have {self.student_dim} columns, got {s.cols}")
        if s.rows < 1:
            raise DimensionError("student sequence must be non-empty")

        t_proj = self.project_teacher(t)                       # 1 x 256
        t_align = ad.interpolate_rows(t_proj, s.rows)          # n x 256
        s_norm = ad.l2_normalize_rows(s)
        t_norm = ad.l2_normalize_rows(t_align)
        attention = ad.softmax_rows(ad.matmul(s_norm, ad.transpose(t_norm)),
                                    temperature=self.temperature)  # n x n
        t_weighted = ad.matmul(attention, t_align)             # n x 256

        l_local = ad.mse(s, t_weighted)
        l_global = ad.l1_of_means(s, t_align)

        weights = ad.softmax_rows(self.loss_logits.value)      # 1 x 2
        w1 = ad.slice_cols(weights, 0, 1)
        w2 = ad.slice_cols(weights, 1, 2)
        l_distill = ad.add(ad.scalar_mul(w1, l_local), ad.scalar_mul(w2, l_global))

        return DcsdBreakdown(
            l_local=l_local.item(),
            l_global=l_global.item(),
            w1=w1.item(),
            w2=w2.item(),
            l_distill=l_distill.item(),
            loss_node=l_distill,
            attention=attention.data,
        )


def dcsd_loss(head: DcsdHead, s: Matrix, t: TeacherEmbedding) -> DcsdBreakdown:
    """Functional alias for :meth:`DcsdHead.loss`."""
    return head.loss(s, t)
