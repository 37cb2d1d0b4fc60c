"""The reference implementations themselves, checked on cases with known answers."""

import numpy as np
import torch

from oracles import brute_auc, finite_difference_check, loop_confusion, loop_softmax


class _WrongSquare(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return x * x

    @staticmethod
    def backward(ctx, g):
        (x,) = ctx.saved_tensors
        return g * 3 * x  # should be 2x


def test_fd_flags_a_wrong_backward():
    x = torch.tensor([0.7, -1.3, 2.0], dtype=torch.float64, requires_grad=True)
    assert finite_difference_check(lambda: _WrongSquare.apply(x).sum(), [x], n_samples=3) > 0.3


def test_fd_accepts_a_right_backward():
    x = torch.tensor([0.7, -1.3, 2.0], dtype=torch.float64, requires_grad=True)
    assert finite_difference_check(lambda: (x**3).sin().sum(), [x], n_samples=3) < 1e-8


def test_fd_near_a_kink():
    # relu input 3e-6 from zero: the coarse stencil straddles the kink, the refined one does not
    x = torch.tensor([3e-6], dtype=torch.float64, requires_grad=True)
    assert finite_difference_check(lambda: torch.relu(x).sum() * 5, [x], n_samples=1) < 1e-8
    assert finite_difference_check(lambda: torch.relu(x).sum() * 5, [x], n_samples=1, shrink=0) > 0.1


def test_brute_auc_hand_values():
    assert brute_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert brute_auc([0.5, 0.5], [0, 1]) == 0.5


def test_loop_softmax_rows():
    row = np.asarray(loop_softmax([1.0, 2.0, 3.0]))
    assert abs(row.sum() - 1) < 1e-15 and row[2] > row[1] > row[0]


def test_loop_confusion_hand_counts():
    assert loop_confusion([0.9, 0.5, 0.2, 0.6], [1, 0, 0, 0], 0.5) == (1, 2, 1, 0)
