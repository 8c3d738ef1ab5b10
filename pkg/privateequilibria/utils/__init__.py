from .load_class_from_str import load_class_from_string

__all__ = ["load_class_from_string"]
