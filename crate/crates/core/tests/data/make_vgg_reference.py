"""Regenerates vgg_small.safetensors and vgg_small_reference.safetensors.

A narrow network with torchvision's VGG module layout and random weights,
evaluated by PyTorch. The Rust test loads the same weights and compares.

    python make_vgg_reference.py
"""
import torch
from torch import nn
from safetensors.torch import save_file

BLOCKS = [[4, 4], [6, 6], [8, 8], [8, 8], [8, 8]]
CLASSIFIER = [16, 16, 10]
POOL = 3
LAYERS = ["conv1_1", "conv1_2", "conv2_2", "conv3_1", "conv4_2", "conv5_1"]
PULLBACK_LAYERS = ["conv1_2", "conv3_1", "conv5_1"]
MEAN = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
STD = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)


def build():
    mods, names, cin = [], {}, 3
    for b, block in enumerate(BLOCKS):
        for k, cout in enumerate(block):
            mods += [nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU()]
            names[len(mods) - 1] = f"conv{b + 1}_{k + 1}"
            cin = cout
        mods.append(nn.MaxPool2d(2, 2))
    dense, fan_in = [], cin * POOL * POOL
    for i, out in enumerate(CLASSIFIER):
        dense.append(nn.Linear(fan_in, out))
        if i + 1 < len(CLASSIFIER):
            dense += [nn.ReLU(), nn.Dropout()]
        fan_in = out
    net = nn.Module()
    net.features = nn.Sequential(*mods)
    net.avgpool = nn.AdaptiveAvgPool2d(POOL)
    net.classifier = nn.Sequential(*dense)
    return net.eval(), names


def main():
    torch.manual_seed(20240611)
    net, names = build()
    with torch.no_grad():
        # He-uniform keeps activations O(1); the damped last layer keeps the
        # softmax away from one-hot so probabilities are informative
        for m in net.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                bound = (6.0 / m.weight[0].numel()) ** 0.5
                m.weight.uniform_(-bound, bound)
                m.bias.uniform_(-0.1, 0.1)
        net.classifier[-1].weight.mul_(0.2)
    save_file({k: v.contiguous() for k, v in net.state_dict().items()}, "vgg_small.safetensors")

    gen = torch.Generator().manual_seed(7)
    feat_img = torch.rand(40, 48, 3, generator=gen, dtype=torch.float64)
    cls_img = torch.rand(64, 64, 3, generator=gen, dtype=torch.float64)
    out = {"features_input": feat_img, "classify_input": cls_img}
    with torch.no_grad():
        x = (feat_img.permute(2, 0, 1).float() - MEAN) / STD
        x = x.unsqueeze(0)
        for i, m in enumerate(net.features):
            x = m(x)
            if i in names and names[i] in LAYERS:
                out[names[i]] = x[0].clone()
        y = ((cls_img.permute(2, 0, 1).float() - MEAN) / STD).unsqueeze(0)
        y = net.classifier(torch.flatten(net.avgpool(net.features(y)), 1))
        out["probabilities"] = torch.softmax(y[0].double(), 0)

    # gradient of sum_l <R_l, F_l> with respect to the [0, 1] pixels
    pixels = feat_img.float().requires_grad_()
    x = ((pixels.permute(2, 0, 1) - MEAN) / STD).unsqueeze(0)
    loss = 0.0
    for i, m in enumerate(net.features):
        x = m(x)
        if names.get(i) in PULLBACK_LAYERS:
            r = torch.empty_like(x[0]).uniform_(-1.0, 1.0, generator=gen)
            out[f"cotangent.{names[i]}"] = r
            loss = loss + (r * x[0]).sum()
    loss.backward()
    out["input_gradient"] = pixels.grad.clone()
    save_file({k: v.contiguous() for k, v in out.items()}, "vgg_small_reference.safetensors")


if __name__ == "__main__":
    main()
