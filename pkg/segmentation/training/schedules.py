def poly_lr(step, max_steps, base_lr, power=0.9):
    """base_lr * (1 - step / max_steps) ** power, 0 from max_steps on."""
    if max_steps <= 0:
        raise ValueError(f"max_steps must be positive, got {max_steps}")
    progress = min(max(step, 0), max_steps) / max_steps
    return base_lr * (1.0 - progress) ** power


class PolyLR:
    """Sets the poly learning rate on every parameter group of an optimizer."""

    def __init__(self, optimizer, max_steps, base_lr, power=0.9):
        self.optimizer = optimizer
        self.max_steps = max_steps
        self.base_lr = base_lr
        self.power = power

    def step(self, step):
        lr = poly_lr(step, self.max_steps, self.base_lr, self.power)
        for group in self.optimizer.param_groups:
            group['lr'] = lr
        return lr
