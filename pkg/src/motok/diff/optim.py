import torch


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"non-finite gradient in parameter {name!r}")


class Adam:
    """Adam over named parameters, with moments kept across steps.

    Parameters whose gradient is ``None`` are treated as having zero gradient.
    """

    def __init__(self, named_params, lr=2e-4, betas=(0.9, 0.999), eps=1e-8, clip_norm=None):
        self.params = dict(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.v = {k: torch.zeros_like(p) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {}
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else torch.zeros_like(p)
            if not torch.isfinite(g).all():
                raise NonFiniteGradientError(name)
            grads[name] = g
        if self.clip_norm is not None:
            clip_by_global_norm(grads, self.clip_norm)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1 - b1 ** self.t
        bc2 = 1 - b2 ** self.t
        with torch.no_grad():
            for name, p in self.params.items():
                g = grads[name]
                self.m[name].mul_(b1).add_(g, alpha=1 - b1)
                self.v[name].mul_(b2).addcmul_(g, g, value=1 - b2)
                denom = (self.v[name] / bc2).sqrt_().add_(self.eps)
                p.addcdiv_(self.m[name], denom, value=-self.lr / bc1)


def adam_step(optimizer, lr=None):
    """Apply one Adam update using the gradients stored on the parameters."""
    if lr is not None:
        optimizer.lr = lr
    optimizer.step()


def clip_by_global_norm(grads, max_norm):
    """Scale the gradient dict in place so its global L2 norm is at most ``max_norm``."""
    total = torch.sqrt(sum((g.double() ** 2).sum() for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (float(total) + 1e-12)
        for g in grads.values():
            g.mul_(scale)
    return float(total)
