"""Rectified Adam.

Adam's adaptive learning rate has high variance while the second-moment
estimate is based on few samples; the rectification term switches the
update to plain momentum SGD until the variance estimate is tractable
(rho_t > 5) and then scales it to match the variance of the
infinite-memory estimator.
"""

from __future__ import annotations

import math

import torch


class RectifiedAdam(torch.optim.Optimizer):
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        if lr <= 0.0:
            raise ValueError("invalid learning rate")
        if not 0.0 <= betas[0] < 1.0 or not 0.0 <= betas[1] < 1.0:
            raise ValueError("invalid beta parameters")
        defaults = dict(lr=lr, betas=betas, eps=eps)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            lr = group["lr"]
            eps = group["eps"]
            rho_inf = 2.0 / (1.0 - beta2) - 1.0
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                state["step"] += 1
                t = state["step"]
                exp_avg, exp_avg_sq = state["exp_avg"], state["exp_avg_sq"]

                exp_avg.mul_(beta1).add_(grad, alpha=1.0 - beta1)
                exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)

                bias_correction1 = 1.0 - beta1**t
                bias_correction2 = 1.0 - beta2**t
                m_hat = exp_avg / bias_correction1

                rho_t = rho_inf - 2.0 * t * beta2**t / bias_correction2
                if rho_t > 5.0:
                    rect = math.sqrt(
                        (rho_t - 4.0) * (rho_t - 2.0) * rho_inf
                        / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)
                    )
                    adaptive = math.sqrt(bias_correction2) / exp_avg_sq.sqrt().add_(eps)
                    p.add_(m_hat * adaptive, alpha=-lr * rect)
                else:
                    p.add_(m_hat, alpha=-lr)
        return loss
