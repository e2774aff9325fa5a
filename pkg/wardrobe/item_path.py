import os

from django.utils.encoding import force_str


class ItemPath:
    """
    Callable class for generating the relative path of an image file
    inside a dataset or sample directory.
    """

    def __init__(self, directory, extension=".png"):
        self.directory = directory
        self.extension = extension

    def __call__(self, key):
        return self.generate_filename(key)

    def get_directory_name(self):
        return os.path.normpath(force_str(self.directory))

    def get_filename(self, key):
        return f"{force_str(key)}{self.extension}"

    def generate_filename(self, key):
        return os.path.join(self.get_directory_name(), self.get_filename(key))


item_image_path = ItemPath("items/")
slot_image_path = ItemPath("slots/")
