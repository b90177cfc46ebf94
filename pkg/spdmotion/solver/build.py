from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Set, Type, Union

import torch

from spdmotion.config import CfgNode
from spdmotion.modeling.layers import StiefelParameter

from .lr_scheduler import WarmupCosineLR, WarmupMultiStepLR

__all__ = [
    "stiefel_project",
    "stiefel_retract",
    "stiefel_step",
    "RiemannianSGD",
    "build_optimizer",
    "build_lr_scheduler",
]

_GradientClipperInput = Union[torch.Tensor, Iterable[torch.Tensor]]
_GradientClipper = Callable[[_GradientClipperInput], None]


def _sym(a: torch.Tensor) -> torch.Tensor:
    return 0.5 * (a + a.transpose(-1, -2))


def stiefel_project(w: torch.Tensor, grad: torch.Tensor) -> torch.Tensor:
    """
    Tangent-space projection at ``w`` (orthonormal rows): G - sym(G W^T) W.
    """
    return grad - _sym(grad @ w.transpose(-1, -2)) @ w


def stiefel_retract(m: torch.Tensor) -> torch.Tensor:
    """
    QR retraction onto matrices with orthonormal rows. Factorizes M^T = QR and
    returns (Q D)^T with D = sign(diag R) (zeros counted as +1), so that a
    point already on the manifold maps to itself.
    """
    q, r = torch.linalg.qr(m.transpose(-1, -2))
    sign = (torch.diagonal(r, dim1=-2, dim2=-1).sign() + 0.5).sign()
    return (q * sign.unsqueeze(-2)).transpose(-1, -2)


def stiefel_step(w: torch.Tensor, grad: torch.Tensor, lr: float) -> torch.Tensor:
    """
    One Riemannian gradient step: project the Euclidean gradient on the tangent
    space at ``w``, move by ``-lr`` and retract. Works on (..., p, n) batches.
    """
    if not lr > 0:
        raise ValueError("learning rate must be positive, got {}".format(lr))
    return stiefel_retract(w - lr * stiefel_project(w, grad))


class RiemannianSGD(torch.optim.SGD):
    """
    SGD for Euclidean parameters; param groups flagged ``stiefel`` take
    projected steps followed by a QR retraction (no momentum, no weight decay).
    """

    def __init__(self, params, lr, momentum=0, nesterov=False):
        super().__init__(params, lr, momentum=momentum, nesterov=nesterov)
        for group in self.param_groups:
            if group.get("stiefel", False):
                if group["momentum"] != 0 or group["weight_decay"] != 0:
                    raise ValueError("Stiefel parameter groups take plain gradient steps")

    def _stiefel_params(self):
        for group in self.param_groups:
            if not group.get("stiefel", False):
                continue
            for p in group["params"]:
                if p.grad is not None:
                    yield p

    @torch.no_grad()
    def step(self, closure=None):
        for p in self._stiefel_params():
            p.grad.copy_(stiefel_project(p, p.grad))

        loss = super().step(closure)

        for p in self._stiefel_params():
            p.copy_(stiefel_retract(p))
        return loss


class GradientClipType(Enum):
    VALUE = "value"
    NORM = "norm"


def _create_gradient_clipper(cfg: CfgNode) -> _GradientClipper:
    """
    Creates gradient clipping closure to clip by value or by norm,
    according to the provided config.
    """
    cfg = cfg.clone()

    def clip_grad_norm(p: _GradientClipperInput):
        torch.nn.utils.clip_grad_norm_(p, cfg.CLIP_VALUE, cfg.NORM_TYPE)

    def clip_grad_value(p: _GradientClipperInput):
        torch.nn.utils.clip_grad_value_(p, cfg.CLIP_VALUE)

    _GRADIENT_CLIP_TYPE_TO_CLIPPER = {
        GradientClipType.VALUE: clip_grad_value,
        GradientClipType.NORM: clip_grad_norm,
    }
    return _GRADIENT_CLIP_TYPE_TO_CLIPPER[GradientClipType(cfg.CLIP_TYPE)]


def _generate_optimizer_class_with_gradient_clipping(
    optimizer_type: Type[torch.optim.Optimizer], gradient_clipper: _GradientClipper
) -> Type[torch.optim.Optimizer]:
    """
    Dynamically creates a new type that inherits the type of a given instance
    and overrides the `step` method to clip the gradients of the Euclidean
    parameter groups first.
    """

    def optimizer_wgc_step(self, closure=None):
        for group in self.param_groups:
            if group.get("stiefel", False):
                continue
            for p in group["params"]:
                if p.grad is not None:
                    gradient_clipper(p)
        return super(type(self), self).step(closure)

    OptimizerWithGradientClip = type(
        optimizer_type.__name__ + "WithGradientClip",
        (optimizer_type,),
        {"step": optimizer_wgc_step},
    )
    return OptimizerWithGradientClip


def maybe_add_gradient_clipping(
    cfg: CfgNode, optimizer: torch.optim.Optimizer
) -> torch.optim.Optimizer:
    """
    If gradient clipping is enabled through config options, re-class the
    optimizer so that its `step` clips Euclidean gradients first. Otherwise
    return it unchanged.
    """
    if not cfg.SOLVER.CLIP_GRADIENTS.ENABLED:
        return optimizer
    grad_clipper = _create_gradient_clipper(cfg.SOLVER.CLIP_GRADIENTS)
    OptimizerWithGradientClip = _generate_optimizer_class_with_gradient_clipping(
        type(optimizer), grad_clipper
    )
    optimizer.__class__ = OptimizerWithGradientClip
    return optimizer


def build_optimizer(cfg: CfgNode, model: torch.nn.Module) -> torch.optim.Optimizer:
    """
    Build an optimizer from config. Stiefel weights get their own group with
    lr = BASE_LR * STIEFEL_LR_FACTOR; biases use BIAS_LR_FACTOR.
    """
    params: List[Dict[str, Any]] = []
    memo: Set[torch.nn.parameter.Parameter] = set()
    for module_name, module in model.named_modules():
        for key, value in module.named_parameters(recurse=False):
            if not value.requires_grad:
                continue
            if value in memo:
                continue
            memo.add(value)
            if isinstance(value, StiefelParameter):
                params.append(
                    {
                        "params": [value],
                        "lr": cfg.SOLVER.BASE_LR * cfg.SOLVER.STIEFEL_LR_FACTOR,
                        "momentum": 0.0,
                        "weight_decay": 0.0,
                        "stiefel": True,
                    }
                )
                continue
            lr = cfg.SOLVER.BASE_LR
            if key == "bias":
                lr = cfg.SOLVER.BASE_LR * cfg.SOLVER.BIAS_LR_FACTOR
            params.append({"params": [value], "lr": lr, "weight_decay": cfg.SOLVER.WEIGHT_DECAY})

    optimizer = RiemannianSGD(
        params, cfg.SOLVER.BASE_LR, momentum=cfg.SOLVER.MOMENTUM, nesterov=cfg.SOLVER.NESTEROV
    )
    optimizer = maybe_add_gradient_clipping(cfg, optimizer)
    return optimizer


def build_lr_scheduler(
    cfg: CfgNode, optimizer: torch.optim.Optimizer, max_iter: int
) -> torch.optim.lr_scheduler.LambdaLR:
    """
    Build a LR scheduler from config.
    """
    name = cfg.SOLVER.LR_SCHEDULER_NAME
    if name == "WarmupMultiStepLR":
        return WarmupMultiStepLR(
            optimizer,
            cfg.SOLVER.STEPS,
            cfg.SOLVER.GAMMA,
            warmup_factor=cfg.SOLVER.WARMUP_FACTOR,
            warmup_iters=cfg.SOLVER.WARMUP_ITERS,
            warmup_method=cfg.SOLVER.WARMUP_METHOD,
        )
    elif name == "WarmupCosineLR":
        return WarmupCosineLR(
            optimizer,
            max_iter,
            warmup_factor=cfg.SOLVER.WARMUP_FACTOR,
            warmup_iters=cfg.SOLVER.WARMUP_ITERS,
            warmup_method=cfg.SOLVER.WARMUP_METHOD,
        )
    else:
        raise ValueError("Unknown LR scheduler: {}".format(name))
