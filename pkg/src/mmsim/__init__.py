"""Event-driven limit-order-book market-making simulator and environment."""

from .book import (
    AGENT,
    ASK,
    BID,
    HIST,
    PESSIMISTIC,
    PROPORTIONAL,
    Book,
    BookEvent,
    Fill,
    Order,
    RefTracker,
    apply_event,
    compute_tilde_ref,
    level_index,
    match_marketable,
    slot_price,
)
from .data import Dataset, SnapshotRecord, SynthConfig, load_dataset, save_dataset, synth_generate
from .env import (
    Action,
    EpisodeConfig,
    MarketMakingEnv,
    Observation,
    RewardParams,
    compute_reward,
    decode_action,
    diff_orders,
)
from .experts import (
    FoicExpert,
    LiicExpert,
    LtiicExpert,
    LtiicParams,
    encode_quotes_as_action,
    export_expert_dataset,
    foic_quote,
    liic_quote,
    load_expert_dataset,
    ltiic_quote,
    make_strategy,
    run_episode,
)
from .metrics import (
    EpisodeReport,
    adverse_selection_ratio,
    build_report,
    episode_pnl,
    mean_abs_position,
    return_per_trade,
    sign_test_pvalue,
    summarize,
)
from .replay import ReplaySession, infer_events, step_replay
from .signals import SignalSpec, momentum_signal, oracle_signal
from .trace import EpisodeTrace, StepRecord

__version__ = "0.1.0"
