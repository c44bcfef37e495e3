"""Semi-supervised hyperspectral classification with a contrastive
two-branch graph convolutional network over superpixel graphs."""

__version__ = "0.1.0"
