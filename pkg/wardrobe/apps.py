from django.apps import AppConfig


class WardrobeConfig(AppConfig):
    name = "wardrobe"
    verbose_name = "Synthetic fashion world"
