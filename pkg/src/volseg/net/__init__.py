from .backend import BACKEND
from .model import DdspBlock, DdspConfig, NetConfig, SegNet, fuse_outputs

__all__ = ["BACKEND", "DdspBlock", "DdspConfig", "NetConfig", "SegNet",
           "fuse_outputs"]
