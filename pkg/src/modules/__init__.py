"""
Modules Package

Numerical engine, independent of the CLI and the HTTP API.

Sub-packages:
- fixedpoint: Q(i,f) formats and rounding
- nn: tensor operators, fake quantization, gradients
- backbone: ResNet12 / ResNet-lite graphs, forward and backward, BN folding
- training: float and quantization-aware training
- ptq: weight transfer and the post-training quantization pipeline
- fewshot: episodes and the nearest class mean classifier
- data: weight files and datasets
"""
