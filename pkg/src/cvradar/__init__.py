"""Complex-valued CNN surface-material classification for FMCW radar.

The pipeline: ingest (Rx*Tx) x N complex datacubes, optionally range-FFT
each virtual channel, feed the complex matrix through a complex-valued CNN
(complex convolutions, naive complex batch norm, cReLU, modulus max
pooling, amplitude/phase flatten, real dense head), and evaluate on known
(d0) and unseen (d1) sensor distances.  A synthetic FMCW generator stands
in for hardware captures.
"""

from .datacube import (
    DataCube,
    DatasetManifest,
    ManifestEntry,
    MaterialClass,
    load_cube,
    load_cubes,
    load_manifest,
    read_cube,
    reshape_cube,
    save_cube,
    save_manifest,
    write_cube,
)
from .dsp import (
    PreprocMode,
    fft_along_last_axis,
    naive_dft,
    normalize_max_modulus,
    preprocess_cube,
    range_fft_channel,
)
from .cvnn import (
    ComplexBatchNorm,
    ComplexConv2d,
    CTensor,
    DenseReal,
    RTensor,
    backward,
    crelu,
    flatten_amp_phase,
    max_pool2d,
    softmax_cross_entropy,
)
from .model import (
    MaterialNet,
    ModelConfig,
    build_model,
    load_model,
    load_weights,
    parameter_count,
    save_model,
    save_weights,
    stage_shapes,
)
from .synth import (
    DEFAULT_PROFILES,
    MaterialProfile,
    SynthConfig,
    generate_dataset,
    load_profiles,
    range_resolution,
    synth_channel,
    synth_cube,
)
from .trainer import Adam, EpochRecord, TrainConfig, prepare_inputs, stratified_split, train
from .evaluation import (
    EvalReport,
    ModeComparison,
    compare_modes,
    evaluate,
    render_comparison,
    render_report,
)

__version__ = "0.1.0"
