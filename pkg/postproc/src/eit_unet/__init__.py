"""Convolutional post-processing for direct EIT reconstructions: reads
"dcm-ds-1" paired datasets, trains an encoder-decoder network and applies
it plane-by-plane to new images."""

from eit_unet.data import DatasetBundle, DatasetFormatError, load_dataset
from eit_unet.evaluate import evaluate_report, format_report, mse
from eit_unet.infer import (InferenceError, denormalize_plane, enhance_complex,
                            infer_plane, normalize_plane)
from eit_unet.model import (ConfigError, UNet, UNetConfig, build_model,
                            count_parameters, frobenius_mse, parameter_count,
                            sweep_config_for_parameters)
from eit_unet.training import (TrainConfig, TrainingError, load_checkpoint,
                               save_checkpoint, train)

__version__ = "0.1.0"
