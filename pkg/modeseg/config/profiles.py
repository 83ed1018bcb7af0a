"""Pre-defined configuration profiles for common experiments."""

from .settings import ConfigBuilder


class ConfigProfiles:
    """Pre-defined configuration profiles for common experiments."""

    @staticmethod
    def unet_desk():
        """Batch-normalized mini U-Net sized for a CPU."""
        return (
            ConfigBuilder()
            .with_arch("unet")
            .with_norm("batch")
            .desk_scale()
            .with_optimizer("adam", 1e-3)
            .with_loss("dice")
            .build()
        )

    @staticmethod
    def unet_mode_desk():
        """Mode-normalized (two modes) mini U-Net sized for a CPU."""
        return (
            ConfigBuilder()
            .with_arch("unet")
            .with_norm("mode", modes=2)
            .desk_scale()
            .with_optimizer("adam", 1e-3)
            .with_loss("dice")
            .build()
        )

    @staticmethod
    def segnet_desk():
        """Batch-normalized mini SegNet sized for a CPU."""
        return (
            ConfigBuilder()
            .with_arch("segnet")
            .with_norm("batch")
            .desk_scale()
            .with_optimizer("adam", 1e-3)
            .with_loss("dice")
            .build()
        )

    @staticmethod
    def segnet_mode_desk():
        """Mode-normalized (two modes) mini SegNet sized for a CPU."""
        return (
            ConfigBuilder()
            .with_arch("segnet")
            .with_norm("mode", modes=2)
            .desk_scale()
            .with_optimizer("adam", 1e-3)
            .with_loss("dice")
            .build()
        )

    @staticmethod
    def unet_full():
        """Full-size U-Net with the best grid-search setting (Adam 1e-4, dropout 0.1, Dice)."""
        return (
            ConfigBuilder()
            .with_arch("unet")
            .with_norm("batch")
            .full_scale()
            .with_optimizer("adam", 1e-4)
            .with_dropout(0.1)
            .with_loss("dice")
            .build()
        )

    @staticmethod
    def segnet_full():
        """Full-size SegNet with the best grid-search setting (Adam 1e-3, no dropout, Dice)."""
        return (
            ConfigBuilder()
            .with_arch("segnet")
            .with_norm("batch")
            .full_scale()
            .with_optimizer("adam", 1e-3)
            .with_dropout(0.0)
            .with_loss("dice")
            .build()
        )

    @staticmethod
    def smoke():
        """Tiny model and scene for tests and quick checks."""
        return (
            ConfigBuilder()
            .with_arch("unet")
            .with_norm("batch")
            .with_model_size(2, 4)
            .with_tile_size(16)
            .with_batch_size(4)
            .with_epochs(3)
            .with_patience(2)
            .with_synthetic_scene(96, 96, coverage=0.4)
            .build()
        )

    @classmethod
    def names(cls):
        return [
            "unet_desk",
            "unet_mode_desk",
            "segnet_desk",
            "segnet_mode_desk",
            "unet_full",
            "segnet_full",
            "smoke",
        ]

    @classmethod
    def get(cls, name: str):
        """Look up a profile by name."""
        from ..core.exceptions import ConfigurationError

        if name not in cls.names():
            raise ConfigurationError(
                f"Unknown profile '{name}'",
                config_field="profile",
                expected=" | ".join(cls.names()),
                provided_value=name,
            )
        return getattr(cls, name)()
