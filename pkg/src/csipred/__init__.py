"""Effective-SINR prediction workbench for TDD link adaptation under
channel aging: TDL channel simulation, EESM/CQI link adaptation, dense
and LSTM forecasters, and Monte-Carlo NMSE/throughput sweeps."""

from .channel import (
    ChannelSlotSeries,
    FadingConfig,
    SinrGrid,
    TapProfile,
    generate_fading,
    load_tdl_profile,
    per_rb_sinr,
    stale_channel_slot,
)
from .linkadapt import (
    CqiEntry,
    CqiTable,
    EffectiveSinr,
    bler,
    default_cqi_table,
    eesm,
    select_cqi,
    spectral_efficiency,
)
from .nn import (
    ArrayDataset,
    DenseParams,
    LstmParams,
    PredictorModel,
    TrainConfig,
    TrainReport,
    count_flops,
    dense_forward,
    gradients,
    lstm_forward,
    lstm_step,
    mse_loss,
    train,
)
from .windows import (
    EffSinrTrace,
    WindowSample,
    build_windows,
    hold_baseline,
    nmse_db,
    predict,
)
from .harness import (
    DatasetSplit,
    ExperimentConfig,
    SweepRecord,
    generate_dataset,
    parse_config,
    run_complexity_sweep,
    run_nmse_sweep,
    run_throughput_sim,
)

__version__ = "0.1.0"
